//! The minimal-requirement tests and the repetition protocol around them.
//!
//! Each repetition splits the data, trains a model, draws one test sample
//! shared by every metric, and runs each enabled test for each metric.
//! Seeds come from [`crate::seed::derive`], so the report is a pure
//! function of the dataset and the [`SuiteConfig`].

mod checks;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricId;
use crate::model::{Activation, ModelSpec, TrainConfig};
use crate::numerics::NumericsConfig;

pub use checks::{
    identical_class_test, identical_subclass_test, model_randomization_test, norm_analysis,
    residual_cosine_analysis, sample_test_instances, topk_identical_class_test,
    topk_identical_subclass_test, LogHistogram, NormAnalysis, ResidualAnalysis, TestOutcome,
    MIN_SUBCLASS_SAMPLES, NORM_BINS,
};
pub use suite::{
    run_suite, train_repetition, Artifacts, Cell, EvaluationReport, NormRecord, ReportMeta, RepetitionMeta,
    ResidualRecord, TrainedRepetition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Randomization,
    IdenticalClass,
    IdenticalSubclass,
    TopkClass,
    TopkSubclass,
    NormAnalysis,
    ResidualAnalysis,
}

impl TestKind {
    pub const ALL: [TestKind; 7] = [
        TestKind::Randomization,
        TestKind::IdenticalClass,
        TestKind::IdenticalSubclass,
        TestKind::TopkClass,
        TestKind::TopkSubclass,
        TestKind::NormAnalysis,
        TestKind::ResidualAnalysis,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TestKind::Randomization => "randomization",
            TestKind::IdenticalClass => "identical_class",
            TestKind::IdenticalSubclass => "identical_subclass",
            TestKind::TopkClass => "topk_class",
            TestKind::TopkSubclass => "topk_subclass",
            TestKind::NormAnalysis => "norm_analysis",
            TestKind::ResidualAnalysis => "residual_analysis",
        }
    }

    /// Runs on the superclass relabeling of the data.
    pub fn needs_subclasses(self) -> bool {
        matches!(self, TestKind::IdenticalSubclass | TestKind::TopkSubclass)
    }

    pub fn parse_list(text: &str) -> Result<Vec<TestKind>> {
        text.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        TestKind::ALL
            .into_iter()
            .find(|k| k.token() == t)
            .ok_or_else(|| Error::invalid(format!("unknown test `{s}`")))
    }
}

/// Architecture of the models the suite trains; input and output sizes
/// come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelTemplate {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub l2_penalty: f64,
    pub bias: bool,
}

impl Default for ModelTemplate {
    fn default() -> Self {
        ModelTemplate {
            hidden_layers: Vec::new(),
            activation: Activation::Relu,
            l2_penalty: 0.0,
            bias: true,
        }
    }
}

impl ModelTemplate {
    pub fn spec(&self, input_dim: usize, class_count: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            class_count,
            hidden_layers: self.hidden_layers.clone(),
            activation: self.activation,
            l2_penalty: self.l2_penalty,
            bias: self.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub repetitions: usize,
    /// Capped at the size of the (filtered) test pool.
    pub test_sample_size: usize,
    pub train_fraction: f64,
    pub standardize: bool,
    pub metrics: Vec<MetricId>,
    pub tests: Vec<TestKind>,
    pub k: usize,
    pub master_seed: u64,
    pub model: ModelTemplate,
    /// `seed` is replaced per repetition.
    pub train: TrainConfig,
    pub numerics: NumericsConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            repetitions: 10,
            test_sample_size: 500,
            train_fraction: 0.5,
            standardize: true,
            metrics: MetricId::all_for(true),
            tests: vec![
                TestKind::Randomization,
                TestKind::IdenticalClass,
                TestKind::IdenticalSubclass,
            ],
            k: 10,
            master_seed: 0,
            model: ModelTemplate::default(),
            train: TrainConfig::default(),
            numerics: NumericsConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.test_sample_size < 1 {
            return Err(Error::invalid("test sample size must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train fraction must lie in (0, 1)"));
        }
        if self.metrics.is_empty() && self.tests.iter().any(|t| *t != TestKind::ResidualAnalysis) {
            return Err(Error::invalid("no metrics selected"));
        }
        if self.tests.is_empty() {
            return Err(Error::invalid("no tests selected"));
        }
        self.train.validate()
    }
}
