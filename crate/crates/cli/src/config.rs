use std::path::{Path, PathBuf};

use relex::evaluation::ModelTemplate;
use relex::{BlobConfig, Dataset, MetricId, NumericsConfig, SuiteConfig, TestKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One declarative run: where the data comes from, how models are built
/// and trained, what the suite evaluates and where outputs go.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelTemplate,
    pub train: TrainConfig,
    pub suite: SuiteSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// CSV file, resolved against the config file's directory.
    pub csv: Option<PathBuf>,
    /// The CSV carries a trailing subclass column.
    pub has_subclass: bool,
    pub blobs: Option<BlobSection>,
    /// Relabel the classes into two random superclasses before use.
    pub superclass: bool,
    pub train_fraction: f64,
    pub standardize: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            csv: None,
            has_subclass: false,
            blobs: None,
            superclass: false,
            train_fraction: 0.5,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobSection {
    pub classes: usize,
    pub subclusters: usize,
    pub dim: usize,
    pub per_class: usize,
    pub center_spread: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for BlobSection {
    fn default() -> Self {
        let b = BlobConfig::default();
        BlobSection {
            classes: b.original_class_count,
            subclusters: b.subclusters_per_class,
            dim: b.dim,
            per_class: b.per_class_count,
            center_spread: b.center_spread,
            noise_sigma: b.noise_sigma,
            seed: 0,
        }
    }
}

impl BlobSection {
    pub fn blob_config(&self) -> BlobConfig {
        BlobConfig {
            original_class_count: self.classes,
            subclusters_per_class: self.subclusters,
            dim: self.dim,
            per_class_count: self.per_class,
            center_spread: self.center_spread,
            noise_sigma: self.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub repetitions: usize,
    pub test_sample_size: usize,
    pub metrics: Vec<MetricId>,
    pub tests: Vec<TestKind>,
    pub k: usize,
    pub master_seed: u64,
    pub numerics: NumericsConfig,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let s = SuiteConfig::default();
        SuiteSection {
            repetitions: s.repetitions,
            test_sample_size: s.test_sample_size,
            metrics: s.metrics,
            tests: s.tests,
            k: s.k,
            master_seed: s.master_seed,
            numerics: s.numerics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub report: PathBuf,
    pub model: PathBuf,
    pub analysis_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            report: "report.json".into(),
            model: "model.json".into(),
            analysis_dir: "analysis".into(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file; relative dataset paths are taken
    /// from the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(csv) = &cfg.dataset.csv {
            if csv.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.dataset.csv = Some(base.join(csv));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.dataset.csv, &self.dataset.blobs) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("dataset: give either `csv` or `blobs`, not both".into()))
            }
            (None, None) => return Err(CliError::Config("dataset: one of `csv` or `blobs` is required".into())),
            (Some(p), None) if !p.is_file() => {
                return Err(CliError::Config(format!("dataset: {} does not exist", p.display())))
            }
            (None, Some(b)) => b.blob_config().validate().map_err(|e| CliError::Config(format!("dataset: {e}")))?,
            _ => {}
        }
        self.suite_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            repetitions: self.suite.repetitions,
            test_sample_size: self.suite.test_sample_size,
            train_fraction: self.dataset.train_fraction,
            standardize: self.dataset.standardize,
            metrics: self.suite.metrics.clone(),
            tests: self.suite.tests.clone(),
            k: self.suite.k,
            master_seed: self.suite.master_seed,
            model: self.model.clone(),
            train: self.train.clone(),
            numerics: self.suite.numerics.clone(),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let data = match (&self.dataset.csv, &self.dataset.blobs) {
            (Some(path), _) => Dataset::load_csv(path, self.dataset.has_subclass).map_err(|e| match e {
                relex::Error::Io(io) => CliError::Config(format!("{}: {io}", path.display())),
                other => CliError::Config(other.to_string()),
            })?,
            (None, Some(b)) => b.blob_config().generate(b.seed)?,
            (None, None) => return Err(CliError::Config("dataset: no source".into())),
        };
        if self.dataset.superclass {
            let seed = relex::seed::derive(self.suite.master_seed, 0, relex::seed::Stream::Superclass);
            return Ok(data.make_superclass(seed)?);
        }
        Ok(data)
    }
}
