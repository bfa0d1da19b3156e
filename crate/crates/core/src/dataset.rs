//! Datasets: CSV ingestion, synthetic blobs, stratified splits,
//! standardization and the two-superclass relabeling.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

/// One labeled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: usize,
    /// Original class index; only present on superclass datasets.
    pub subclass: Option<usize>,
}

impl Instance {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Instance {
            features,
            label,
            subclass: None,
        }
    }

    /// Same features and subclass, different label.
    pub fn relabeled(&self, label: usize) -> Instance {
        Instance {
            features: self.features.clone(),
            label,
            subclass: self.subclass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    instances: Vec<Instance>,
    class_count: usize,
    dim: usize,
    original_class_count: Option<usize>,
}

impl Dataset {
    /// Builds a dataset, checking that every instance has `dim` features and
    /// a label below `class_count`.
    pub fn new(instances: Vec<Instance>, class_count: usize) -> Result<Self> {
        let dim = instances
            .first()
            .map(|z| z.features.len())
            .ok_or_else(|| Error::invalid("dataset has no instances"))?;
        Self::with_dim(instances, class_count, dim, None)
    }

    fn with_dim(
        instances: Vec<Instance>,
        class_count: usize,
        dim: usize,
        original_class_count: Option<usize>,
    ) -> Result<Self> {
        for (i, z) in instances.iter().enumerate() {
            if z.features.len() != dim {
                return Err(Error::invalid(format!(
                    "instance {i} has {} features, expected {dim}",
                    z.features.len()
                )));
            }
            if z.label >= class_count {
                return Err(Error::invalid(format!(
                    "instance {i} has label {} but class count is {class_count}",
                    z.label
                )));
            }
            if let (Some(s), Some(orig)) = (z.subclass, original_class_count) {
                if s >= orig {
                    return Err(Error::invalid(format!(
                        "instance {i} has subclass {s} but original class count is {orig}"
                    )));
                }
            }
        }
        Ok(Dataset {
            instances,
            class_count,
            dim,
            original_class_count,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn get(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn original_class_count(&self) -> Option<usize> {
        self.original_class_count
    }

    pub fn has_subclasses(&self) -> bool {
        self.original_class_count.is_some()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for z in &self.instances {
            counts[z.label] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.instances.iter().map(|z| z.label).collect()
    }

    /// SHA-256 over the canonical CSV rendering, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        let hash = Sha256::digest(&buf);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reads a comma-separated file whose header names `d` feature columns,
    /// then `label` (then `subclass` when `has_subclass`). Labels and
    /// subclasses are arbitrary tokens, re-indexed densely in order of first
    /// appearance.
    pub fn load_csv(path: impl AsRef<Path>, has_subclass: bool) -> Result<Dataset> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, path, has_subclass)
    }

    pub fn read_csv<R: std::io::Read>(
        reader: R,
        path: &Path,
        has_subclass: bool,
    ) -> Result<Dataset> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };

        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let headers = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(parse_err(1, "empty file".into()));
        }
        let trailing = if has_subclass { 2 } else { 1 };
        if headers.len() < trailing + 1 {
            return Err(parse_err(
                1,
                format!("header has {} columns, need at least {}", headers.len(), trailing + 1),
            ));
        }
        let dim = headers.len() - trailing;
        if &headers[dim] != "label" {
            return Err(parse_err(
                1,
                format!("column {} must be named `label`, found `{}`", dim + 1, &headers[dim]),
            ));
        }
        if has_subclass && &headers[dim + 1] != "subclass" {
            return Err(parse_err(
                1,
                format!("last column must be named `subclass`, found `{}`", &headers[dim + 1]),
            ));
        }

        let mut label_index: HashMap<String, usize> = HashMap::new();
        let mut subclass_index: HashMap<String, usize> = HashMap::new();
        let mut instances = Vec::new();

        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            if record.len() != headers.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            let mut features = Vec::with_capacity(dim);
            for (col, cell) in record.iter().take(dim).enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(line, format!("column `{}`: `{cell}` is not a number", &headers[col]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        line,
                        format!("column `{}`: `{cell}` is not finite", &headers[col]),
                    ));
                }
                features.push(v);
            }
            let next = label_index.len();
            let label = *label_index.entry(record[dim].to_string()).or_insert(next);
            let subclass = if has_subclass {
                let next = subclass_index.len();
                Some(*subclass_index.entry(record[dim + 1].to_string()).or_insert(next))
            } else {
                None
            };
            instances.push(Instance {
                features,
                label,
                subclass,
            });
        }

        if instances.is_empty() {
            return Err(parse_err(1, "file contains no data rows".into()));
        }
        let original = has_subclass.then_some(subclass_index.len());
        Self::with_dim(instances, label_index.len(), dim, original)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        if self.has_subclasses() {
            header.push("subclass".into());
        }
        writeln!(out, "{}", header.join(","))?;
        for z in &self.instances {
            let mut row: Vec<String> = z.features.iter().map(|v| format!("{v:?}")).collect();
            row.push(z.label.to_string());
            if self.has_subclasses() {
                row.push(z.subclass.map(|s| s.to_string()).unwrap_or_default());
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Selects instances by index, keeping class metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            class_count: self.class_count,
            dim: self.dim,
            original_class_count: self.original_class_count,
        }
    }

    /// Randomly assigns each original class to superclass 0 or 1, redrawing
    /// any assignment that leaves a side empty. Labels become the superclass
    /// and the old label is kept as the subclass.
    pub fn make_superclass(&self, seed: u64) -> Result<Dataset> {
        if self.class_count < 2 {
            return Err(Error::invalid(
                "superclass construction needs at least two classes",
            ));
        }
        if self.has_subclasses() {
            return Err(Error::invalid("dataset already carries subclass labels"));
        }
        let assignment = superclass_assignment(self.class_count, seed);
        let instances = self
            .instances
            .iter()
            .map(|z| Instance {
                features: z.features.clone(),
                label: assignment[z.label],
                subclass: Some(z.label),
            })
            .collect();
        Ok(Dataset {
            instances,
            class_count: 2,
            dim: self.dim,
            original_class_count: Some(self.class_count),
        })
    }

    /// Stratified split: for each class, `floor(fraction * count)` instances
    /// go to train (clamped so both sides keep at least one), the rest to test.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.class_count];
        for (i, z) in self.instances.iter().enumerate() {
            by_class[z.label].push(i);
        }
        let mut rng = seed::rng(seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (class, mut members) in by_class.into_iter().enumerate() {
            if members.len() < 2 {
                return Err(Error::invalid(format!(
                    "class {class} has {} instance(s); stratified split needs at least 2",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let n_train = ((train_fraction * members.len() as f64).floor() as usize)
                .clamp(1, members.len() - 1);
            train_idx.extend_from_slice(&members[..n_train]);
            test_idx.extend_from_slice(&members[n_train..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((self.subset(&train_idx), self.subset(&test_idx)))
    }

    /// Maps every feature vector through `f`.
    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        Dataset {
            instances: self
                .instances
                .iter()
                .map(|z| Instance {
                    features: f(&z.features),
                    label: z.label,
                    subclass: z.subclass,
                })
                .collect(),
            class_count: self.class_count,
            dim: self.dim,
            original_class_count: self.original_class_count,
        }
    }
}

fn superclass_assignment(class_count: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    loop {
        let assignment: Vec<usize> = (0..class_count)
            .map(|_| usize::from(rng.random_bool(0.5)))
            .collect();
        let ones = assignment.iter().filter(|&&a| a == 1).count();
        if ones > 0 && ones < class_count {
            return assignment;
        }
    }
}

/// Per-feature z-score statistics fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Divisor per feature; 1.0 where the training std is (numerically) zero.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot standardize an empty training set"));
        }
        let n = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for z in train.instances() {
            for (m, v) in mean.iter_mut().zip(&z.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for z in train.instances() {
            for ((s, v), m) in var.iter_mut().zip(&z.features).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // rounding leaves a constant column with a tiny nonzero spread
                if sd > 1e-12 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        ds.map_features(|x| self.transform(x))
    }
}

/// Fits z-score statistics on `train` and applies them to both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Standardizer)> {
    let stats = Standardizer::fit(train)?;
    Ok((stats.apply(train), stats.apply(test), stats))
}

/// Gaussian blobs around per-class subcluster centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub original_class_count: usize,
    pub subclusters_per_class: usize,
    pub dim: usize,
    pub per_class_count: usize,
    pub center_spread: f64,
    pub noise_sigma: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            original_class_count: 4,
            subclusters_per_class: 1,
            dim: 6,
            per_class_count: 100,
            center_spread: 10.0,
            noise_sigma: 1.0,
        }
    }
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.original_class_count < 2 {
            return Err(Error::invalid("blobs need at least 2 classes"));
        }
        if self.subclusters_per_class < 1 {
            return Err(Error::invalid("blobs need at least 1 subcluster per class"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("blobs need dimension at least 2"));
        }
        if self.per_class_count < 1 {
            return Err(Error::invalid("blobs need at least 1 instance per class"));
        }
        if !(self.noise_sigma > 0.0) || !(self.center_spread > self.noise_sigma) {
            return Err(Error::invalid(
                "blob spread must exceed a positive noise sigma",
            ));
        }
        Ok(())
    }

    /// Draws subcluster centers uniformly in a centered hypercube of side
    /// `center_spread`, then `per_class_count` points per class, cycling
    /// through the class's subclusters.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = seed::rng(seed);
        let half = self.center_spread / 2.0;
        let centers: Vec<Vec<Vec<f64>>> = (0..self.original_class_count)
            .map(|_| {
                (0..self.subclusters_per_class)
                    .map(|_| (0..self.dim).map(|_| rng.random_range(-half..=half)).collect())
                    .collect()
            })
            .collect();
        let noise = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::invalid(format!("noise sigma: {e}")))?;
        let mut instances = Vec::with_capacity(self.original_class_count * self.per_class_count);
        for (class, subclusters) in centers.iter().enumerate() {
            for k in 0..self.per_class_count {
                let center = &subclusters[k % subclusters.len()];
                let features = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
                instances.push(Instance::new(features, class));
            }
        }
        Dataset::with_dim(instances, self.original_class_count, self.dim, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, has_subclass: bool) -> Result<Dataset> {
        Dataset::read_csv(text.as_bytes(), Path::new("mem.csv"), has_subclass)
    }

    fn blobs(c: usize, per: usize) -> BlobConfig {
        BlobConfig {
            original_class_count: c,
            subclusters_per_class: 1,
            dim: 2,
            per_class_count: per,
            center_spread: 10.0,
            noise_sigma: 1.0,
        }
    }

    #[test]
    fn csv_labels_are_reindexed_in_first_appearance_order() {
        let ds = parse("f0,f1,label\n1,2,a\n3,4,b\n5,6,a\n", false).unwrap();
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.labels(), vec![0, 1, 0]);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn csv_error_names_the_line() {
        let text = "f0,label\n1,a\n2,b\n3,a\nxyz,b\n";
        match parse(text, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_wrong_arity_is_an_error() {
        let err = parse("f0,f1,label\n1,2,a\n1,a\n", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        assert!(parse("", false).is_err());
        assert!(parse("f0,label\n", false).is_err());
    }

    #[test]
    fn csv_with_subclass_column() {
        let ds = parse("f0,label,subclass\n1,A,cat\n2,A,frog\n3,B,car\n", true).unwrap();
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.original_class_count(), Some(3));
        let subs: Vec<_> = ds.instances().iter().map(|z| z.subclass.unwrap()).collect();
        assert_eq!(subs, vec![0, 1, 2]);
    }

    #[test]
    fn csv_with_segment_shape() {
        let mut text: String = (0..19).map(|j| format!("f{j},")).collect();
        text.push_str("label\n");
        for row in 0..21 {
            let cells: Vec<String> = (0..19).map(|j| format!("{}", row * j)).collect();
            text.push_str(&format!("{},c{}\n", cells.join(","), row % 7));
        }
        let ds = parse(&text, false).unwrap();
        assert_eq!(ds.dim(), 19);
        assert_eq!(ds.class_count(), 7);
    }

    #[test]
    fn csv_round_trip() {
        let ds = blobs(3, 5).generate(3).unwrap();
        let mut buf = Vec::new();
        ds.write_csv_to(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Path::new("x"), false).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn blob_counts_and_determinism() {
        let cfg = blobs(2, 10);
        let a = cfg.generate(1).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.class_counts(), vec![10, 10]);
        let b = cfg.generate(1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, cfg.generate(2).unwrap());
    }

    #[test]
    fn invalid_blob_config_is_rejected() {
        let mut cfg = blobs(2, 10);
        cfg.noise_sigma = 20.0;
        assert!(cfg.generate(0).is_err());
        let mut cfg = blobs(1, 10);
        cfg.original_class_count = 1;
        assert!(cfg.generate(0).is_err());
    }

    #[test]
    fn well_separated_blobs_are_nearest_neighbor_separable() {
        let cfg = BlobConfig {
            original_class_count: 4,
            subclusters_per_class: 2,
            dim: 5,
            per_class_count: 60,
            center_spread: 100.0,
            noise_sigma: 0.1,
        };
        let ds = cfg.generate(11).unwrap();
        let (train, test) = ds.split(0.5, 4).unwrap();
        let mut correct = 0;
        for t in test.instances() {
            let nearest = train
                .instances()
                .iter()
                .min_by(|a, b| {
                    let da: f64 = a.features.iter().zip(&t.features).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = b.features.iter().zip(&t.features).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(nearest.label == t.label);
        }
        assert_eq!(correct, test.len());
    }

    #[test]
    fn superclass_with_two_classes_is_forced() {
        let ds = blobs(2, 4).generate(0).unwrap();
        for seed in 0..20 {
            let sup = ds.make_superclass(seed).unwrap();
            assert_eq!(sup.class_count(), 2);
            let counts = sup.class_counts();
            assert_eq!(counts, vec![4, 4]);
        }
    }

    #[test]
    fn superclass_is_reproducible_and_preserves_origin() {
        let ds = blobs(10, 3).generate(0).unwrap();
        let a = ds.make_superclass(7).unwrap();
        let b = ds.make_superclass(7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), ds.len());
        assert_eq!(a.original_class_count(), Some(10));
        assert!(a.class_counts().iter().all(|&c| c > 0));
        let mut map = vec![None; 10];
        for (orig, sup) in ds.instances().iter().zip(a.instances()) {
            assert_eq!(sup.subclass, Some(orig.label));
            assert_eq!(sup.features, orig.features);
            let slot = &mut map[orig.label];
            assert!(slot.is_none() || *slot == Some(sup.label));
            *slot = Some(sup.label);
        }
    }

    #[test]
    fn superclass_needs_two_classes() {
        let ds = Dataset::new(vec![Instance::new(vec![0.0], 0)], 1).unwrap();
        assert!(ds.make_superclass(0).is_err());
    }

    #[test]
    fn split_is_stratified_partition() {
        let ds = blobs(2, 50).generate(5).unwrap();
        let (train, test) = ds.split(0.5, 9).unwrap();
        assert_eq!(train.class_counts(), vec![25, 25]);
        assert_eq!(test.class_counts(), vec![25, 25]);
        let mut all: Vec<String> = train
            .instances()
            .iter()
            .chain(test.instances())
            .map(|z| format!("{:?}", z))
            .collect();
        let mut orig: Vec<String> = ds.instances().iter().map(|z| format!("{:?}", z)).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(ds.split(0.5, 9).unwrap(), (train, test));
    }

    #[test]
    fn split_vehicle_scale() {
        let cfg = BlobConfig {
            original_class_count: 4,
            subclusters_per_class: 1,
            dim: 18,
            per_class_count: 212,
            center_spread: 5.0,
            noise_sigma: 1.0,
        };
        let mut ds = cfg.generate(0).unwrap();
        ds.instances.truncate(846);
        let (train, test) = ds.split(0.5, 1).unwrap();
        assert!((train.len() as i64 - 423).abs() <= 2, "{}", train.len());
        assert_eq!(train.len() + test.len(), 846);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let ds = Dataset::new(
            vec![
                Instance::new(vec![0.0], 0),
                Instance::new(vec![1.0], 0),
                Instance::new(vec![2.0], 1),
            ],
            2,
        )
        .unwrap();
        assert!(ds.split(0.5, 0).is_err());
    }

    #[test]
    fn standardize_moments_and_constant_column() {
        let mut ds = blobs(3, 20).generate(2).unwrap();
        for z in &mut ds.instances {
            z.features.push(4.2);
        }
        ds.dim = 3;
        let (train, test) = ds.split(0.5, 0).unwrap();
        let (tr, te, stats) = standardize(&train, &test).unwrap();
        let n = tr.len() as f64;
        for j in 0..3 {
            let mean: f64 = tr.instances().iter().map(|z| z.features[j]).sum::<f64>() / n;
            let var: f64 = tr.instances().iter().map(|z| (z.features[j] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            if j < 2 {
                assert!((var.sqrt() - 1.0).abs() < 1e-9);
            } else {
                assert!(tr.instances().iter().all(|z| z.features[j].abs() < 1e-12));
            }
        }
        for (orig, t) in test.instances().iter().zip(te.instances()) {
            let back = stats.inverse(&t.features);
            for (a, b) in back.iter().zip(&orig.features) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let twice = stats.apply(&tr);
        assert_ne!(twice, tr);
    }
}
