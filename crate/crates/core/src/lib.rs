//! Relevance metrics for similarity-based explanation.
//!
//! A relevance metric `R(z_test, z_train)` scores how strongly a training
//! instance supports a model's prediction on a test instance. This crate
//! implements the similarity metrics (ℓ2, cosine, dot over input or hidden
//! representations), the gradient-based metrics (influence functions,
//! relative influence, Fisher kernel, grad-dot, grad-cos) and their
//! norm-insensitive variants, together with the minimal-requirement tests
//! used to judge them:
//!
//! * the model randomization test (rankings must change when the model does),
//! * the identical class test (the top instance shares the predicted class),
//! * the identical subclass test (the top instance shares the latent subclass),
//!
//! plus top-k variants and the norm/residual diagnostics that explain why
//! dot-product metrics fail.
//!
//! Models are deliberately small: multinomial logistic regression and dense
//! MLPs trained with Adam, so that Hessians and Fisher matrices can be
//! assembled densely.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod seed;

pub use dataset::{BlobConfig, Dataset, Instance, Standardizer};
pub use error::{Error, Result};
pub use evaluation::{EvaluationReport, SuiteConfig, TestKind};
pub use metrics::{Family, MetricCache, MetricContext, MetricId, Ranking};
pub use model::{Activation, FeatureMapId, Model, ModelSpec, TrainConfig};
pub use numerics::{Damping, NumericsConfig};
