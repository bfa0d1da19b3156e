use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Full training objective before the first step.
    pub initial_loss: f64,
    /// Full training objective after the last epoch.
    pub final_loss: f64,
    pub epochs: usize,
    pub steps: usize,
}

/// Mini-batch Adam on the mean cross entropy plus the model's L2 penalty.
///
/// Batches are drawn from a fresh permutation each epoch, seeded by
/// `cfg.seed`, so the result is a pure function of its inputs.
pub fn train(model: &Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainSummary)> {
    cfg.validate()?;
    model.check_dataset(data)?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let (initial_loss, _) = model.objective_and_gradient(data)?;
    if !initial_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }

    let mut model = model.clone();
    let p = model.param_count();
    let lam = model.spec().l2_penalty;
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(cfg.seed);
    let mut step = 0i32;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += w * model.accumulate_gradient(data.get(i), w, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if lam > 0.0 {
                for (g, t) in grad.iter_mut().zip(model.theta()) {
                    *g += lam * t;
                }
            }
            step += 1;
            let bc1 = 1.0 - cfg.adam_beta1.powi(step);
            let bc2 = 1.0 - cfg.adam_beta2.powi(step);
            for (k, theta) in model.theta_mut().iter_mut().enumerate() {
                m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * grad[k];
                v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * grad[k] * grad[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
        if model.theta().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: {} steps", step);
    }

    let (final_loss, _) = model.objective_and_gradient(data)?;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok((
        model,
        TrainSummary {
            initial_loss,
            final_loss,
            epochs: cfg.epochs,
            steps: step as usize,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{standardize, BlobConfig};
    use crate::model::{Activation, ModelSpec};

    fn blobs() -> Dataset {
        BlobConfig {
            original_class_count: 3,
            subclusters_per_class: 1,
            dim: 4,
            per_class_count: 60,
            center_spread: 12.0,
            noise_sigma: 0.5,
        }
        .generate(21)
        .unwrap()
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (train_set, test_set) = blobs().split(0.5, 1).unwrap();
        let (train_set, test_set, _) = standardize(&train_set, &test_set).unwrap();
        let init = Model::init_random(ModelSpec::logreg(4, 3), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let (model, summary) = train(&init, &train_set, &cfg).unwrap();
        assert!(model.accuracy(&train_set).unwrap() >= 0.99);
        assert!(model.accuracy(&test_set).unwrap() >= 0.95);
        assert!(summary.final_loss < summary.initial_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_theta() {
        let data = blobs();
        let init = Model::init_random(ModelSpec::mlp(4, 3, &[5], Activation::Tanh), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (model, _) = train(&init, &data, &cfg).unwrap();
        assert_eq!(model.theta(), init.theta());
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs();
        let init = Model::init_random(ModelSpec::mlp(4, 3, &[5], Activation::Relu), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train(&init, &data, &cfg).unwrap().0;
        let b = train(&init, &data, &cfg).unwrap().0;
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn divergence_names_the_epoch() {
        let data = blobs().map_features(|x| x.iter().map(|v| v * 1e150).collect());
        let init = Model::init_random(ModelSpec::logreg(4, 3), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 4,
            ..TrainConfig::default()
        };
        match train(&init, &data, &cfg) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch <= 4),
            other => panic!("expected non-finite loss, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let data = blobs();
        let init = Model::zeros(ModelSpec::logreg(4, 3)).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&init, &data, &cfg).is_err());
    }
}
