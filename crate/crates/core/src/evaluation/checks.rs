use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::metrics::{predicted_instance, MetricCache, Ranking};
use crate::model::Model;
use crate::numerics::{cosine, spearman};
use crate::seed;

/// Scalar result of one test on one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub value: f64,
    /// Instances whose scores were degenerate (undefined cosine or
    /// undefined correlation).
    pub degenerate: usize,
    /// Instances that entered `value`.
    pub evaluated: usize,
}

/// Up to `size` test instances drawn without replacement. With
/// `correct_only`, only instances the model predicts correctly are eligible.
pub fn sample_test_instances(
    model: &Model,
    test: &Dataset,
    size: usize,
    seed: u64,
    correct_only: bool,
) -> Result<Vec<Instance>> {
    let mut pool: Vec<&Instance> = Vec::with_capacity(test.len());
    for z in test.instances() {
        if !correct_only || model.predict(&z.features)? == z.label {
            pool.push(z);
        }
    }
    pool.shuffle(&mut seed::rng(seed));
    pool.truncate(size);
    Ok(pool.into_iter().cloned().collect())
}

/// Mean Spearman correlation between the scores each model assigns to the
/// training set. Each model ranks with its own prediction as the test label.
pub fn model_randomization_test(
    trained: &MetricCache,
    randomized: &MetricCache,
    test_samples: &[Instance],
) -> Result<TestOutcome> {
    if trained.metric() != randomized.metric() {
        return Err(Error::invalid("randomization test needs caches of the same metric"));
    }
    if trained.model().spec() != randomized.model().spec() {
        return Err(Error::invalid("randomization test needs models of the same spec"));
    }
    let rhos: Vec<Option<f64>> = test_samples
        .par_iter()
        .map(|z| {
            let a = trained.scores(&predicted_instance(trained.model(), z)?)?.0;
            let b = randomized.scores(&predicted_instance(randomized.model(), z)?)?.0;
            spearman(&a, &b)
        })
        .collect::<Result<_>>()?;
    let defined: Vec<f64> = rhos.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Degenerate(format!(
            "every rank correlation for `{}` is undefined",
            trained.metric()
        )));
    }
    Ok(TestOutcome {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        degenerate: rhos.len() - defined.len(),
        evaluated: defined.len(),
    })
}

fn rankings(cache: &MetricCache, test_samples: &[Instance]) -> Result<Vec<(Instance, Ranking)>> {
    test_samples
        .par_iter()
        .map(|z| {
            let zt = predicted_instance(cache.model(), z)?;
            let r = cache.rank(&zt)?;
            Ok((zt, r))
        })
        .collect()
}

fn check_k(k: usize, train: &Dataset) -> Result<()> {
    if k < 1 || k > train.len() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={}",
            train.len()
        )));
    }
    Ok(())
}

fn rate(hits: impl Iterator<Item = (bool, bool)>) -> TestOutcome {
    let (mut n, mut ok, mut degenerate) = (0, 0, 0);
    for (hit, deg) in hits {
        n += 1;
        ok += hit as usize;
        degenerate += deg as usize;
    }
    TestOutcome {
        value: if n == 0 { 0.0 } else { ok as f64 / n as f64 },
        degenerate,
        evaluated: n,
    }
}

/// Fraction of test instances whose top-ranked training instance carries
/// the predicted class as its gold label.
pub fn identical_class_test(cache: &MetricCache, test_samples: &[Instance], train: &Dataset) -> Result<TestOutcome> {
    topk_identical_class_test(cache, test_samples, train, 1)
}

/// As [`identical_class_test`], requiring all of the top `k`.
pub fn topk_identical_class_test(
    cache: &MetricCache,
    test_samples: &[Instance],
    train: &Dataset,
    k: usize,
) -> Result<TestOutcome> {
    check_k(k, train)?;
    check_cache(cache, train)?;
    let ranked = rankings(cache, test_samples)?;
    Ok(rate(ranked.iter().map(|(zt, r)| {
        let hit = r.top_k(k).iter().all(|&i| train.get(i).label == zt.label);
        (hit, r.is_degenerate())
    })))
}

/// Fraction of correctly predicted test instances whose top-ranked training
/// instance shares their subclass.
pub fn identical_subclass_test(
    cache: &MetricCache,
    test_samples: &[Instance],
    train: &Dataset,
) -> Result<TestOutcome> {
    topk_identical_subclass_test(cache, test_samples, train, 1)
}

pub const MIN_SUBCLASS_SAMPLES: usize = 10;

pub fn topk_identical_subclass_test(
    cache: &MetricCache,
    test_samples: &[Instance],
    train: &Dataset,
    k: usize,
) -> Result<TestOutcome> {
    check_k(k, train)?;
    check_cache(cache, train)?;
    if !train.has_subclasses() {
        return Err(Error::invalid("identical subclass test needs subclass labels"));
    }
    if test_samples.len() < MIN_SUBCLASS_SAMPLES {
        return Err(Error::Degenerate(format!(
            "only {} correctly predicted test instances; at least {MIN_SUBCLASS_SAMPLES} are needed",
            test_samples.len()
        )));
    }
    let ranked = rankings(cache, test_samples)?;
    for ((zt, _), z) in ranked.iter().zip(test_samples) {
        if zt.label != z.label {
            return Err(Error::invalid(
                "identical subclass test received an incorrectly predicted instance",
            ));
        }
        if z.subclass.is_none() {
            return Err(Error::invalid("test instance lacks a subclass label"));
        }
    }
    Ok(rate(ranked.iter().map(|(zt, r)| {
        let hit = r.top_k(k).iter().all(|&i| train.get(i).subclass == zt.subclass);
        (hit, r.is_degenerate())
    })))
}

fn check_cache(cache: &MetricCache, train: &Dataset) -> Result<()> {
    if cache.len() != train.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            actual: cache.len(),
        });
    }
    Ok(())
}

/// Counts over fixed-width bins of `log10(value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHistogram {
    /// `bins + 1` edges in log10 units.
    pub log10_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl LogHistogram {
    /// Values at or below the first edge (including zeros) land in the
    /// first bin, values at or above the last in the last bin.
    pub fn with_edges(values: &[f64], log10_edges: Vec<f64>) -> Self {
        let bins = log10_edges.len() - 1;
        let (lo, hi) = (log10_edges[0], log10_edges[bins]);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0; bins];
        for v in values {
            let l = if *v > 0.0 { v.log10() } else { f64::NEG_INFINITY };
            let b = if width > 0.0 {
                ((l - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize
            } else {
                0
            };
            counts[b] += 1;
        }
        LogHistogram { log10_edges, counts }
    }

    /// Edges spanning the positive values of `values`.
    pub fn edges_for(values: &[f64], bins: usize) -> Vec<f64> {
        let logs: Vec<f64> = values.iter().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
        let (mut lo, mut hi) = logs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if logs.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let bins = bins.max(1);
        (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
    }
}

pub const NORM_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormAnalysis {
    /// `‖φ(z_i)‖` for every training instance.
    pub all: Vec<f64>,
    /// Norm of the top-ranked training instance, one per test instance.
    pub selected: Vec<f64>,
    pub selected_indices: Vec<usize>,
    pub all_histogram: LogHistogram,
    pub selected_histogram: LogHistogram,
}

impl NormAnalysis {
    /// Mean over selections of the fraction of training norms at or below
    /// the selected norm; about 0.5 when selection ignores the norm.
    pub fn mean_selected_percentile(&self) -> f64 {
        if self.selected.is_empty() {
            return 0.0;
        }
        let mut sorted = self.all.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let total: f64 = self
            .selected
            .iter()
            .map(|s| sorted.partition_point(|v| v <= s) as f64 / n)
            .sum();
        total / self.selected.len() as f64
    }
}

/// Norms of the feature map for all training instances and for the rank-1
/// selections.
pub fn norm_analysis(cache: &MetricCache, test_samples: &[Instance]) -> Result<(NormAnalysis, usize)> {
    let ranked = rankings(cache, test_samples)?;
    let norms = cache.feature_norms();
    let selected_indices: Vec<usize> = ranked.iter().map(|(_, r)| r.top()).collect();
    let selected: Vec<f64> = selected_indices.iter().map(|&i| norms[i]).collect();
    let degenerate = ranked.iter().filter(|(_, r)| r.is_degenerate()).count();
    let edges = LogHistogram::edges_for(norms, NORM_BINS);
    Ok((
        NormAnalysis {
            all: norms.to_vec(),
            all_histogram: LogHistogram::with_edges(norms, edges.clone()),
            selected_histogram: LogHistogram::with_edges(&selected, edges),
            selected,
            selected_indices,
        },
        degenerate,
    ))
}

/// Grad-cos and residual cosine for one same-class and one other-class
/// training partner per test instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualAnalysis {
    pub same_gc: Vec<f64>,
    pub same_residual_cos: Vec<f64>,
    pub diff_gc: Vec<f64>,
    pub diff_residual_cos: Vec<f64>,
    /// Test instances skipped because one partner pool was empty.
    pub skipped: usize,
    /// Pairs where a zero vector made a cosine undefined (scored 0).
    pub degenerate: usize,
}

impl ResidualAnalysis {
    /// `mean(same_gc) - mean(diff_gc)`.
    pub fn gc_gap(&self) -> f64 {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        mean(&self.same_gc) - mean(&self.diff_gc)
    }
}

/// "Same class" means the training label equals the test prediction.
pub fn residual_cosine_analysis(
    model: &Model,
    test_samples: &[Instance],
    train: &Dataset,
    seed: u64,
) -> Result<ResidualAnalysis> {
    model.check_dataset(train)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); train.class_count()];
    for (i, z) in train.instances().iter().enumerate() {
        by_class[z.label].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut out = ResidualAnalysis::default();
    for z in test_samples {
        let zt = predicted_instance(model, z)?;
        let same = &by_class[zt.label];
        let diff: Vec<usize> = (0..train.len())
            .filter(|&i| train.get(i).label != zt.label)
            .collect();
        if same.is_empty() || diff.is_empty() {
            out.skipped += 1;
            continue;
        }
        let pick_same = *same.choose(&mut rng).expect("nonempty");
        let pick_diff = *diff.choose(&mut rng).expect("nonempty");
        let g_t = model.loss_gradient(&zt)?;
        let r_t = model.residual(&zt)?;
        for (i, is_same) in [(pick_same, true), (pick_diff, false)] {
            let zi = train.get(i);
            let gc = cosine(&g_t, &model.loss_gradient(zi)?);
            let rc = cosine(&r_t, &model.residual(zi)?);
            if gc.is_none() || rc.is_none() {
                out.degenerate += 1;
            }
            let (gc, rc) = (gc.unwrap_or(0.0), rc.unwrap_or(0.0));
            if is_same {
                out.same_gc.push(gc);
                out.same_residual_cos.push(rc);
            } else {
                out.diff_gc.push(gc);
                out.diff_residual_cos.push(rc);
            }
        }
    }
    Ok(out)
}
