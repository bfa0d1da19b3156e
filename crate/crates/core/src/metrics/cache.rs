use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{MetricId, Representation, Similarity};
use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{
    cg_solve, cosine_with_norms, dense_hessian, dot, empirical_fisher, hessian_trace, norm,
    squared_distance, training_hessian_vector_product, InverseSolver, NumericsConfig, PsdFactor,
};

/// Per-model state shared by every metric: training gradients and the
/// Hessian/Fisher factors, each computed at most once.
pub struct MetricContext<'a> {
    model: &'a Model,
    train: &'a Dataset,
    cfg: NumericsConfig,
    gradients: Mutex<Option<Arc<Vec<Vec<f64>>>>>,
    hessian: Mutex<Option<Arc<PsdFactor>>>,
    fisher: Mutex<Option<Arc<PsdFactor>>>,
    cg_damping: Mutex<Option<f64>>,
}

fn memo<T: Clone>(slot: &Mutex<Option<T>>, make: impl FnOnce() -> Result<T>) -> Result<T> {
    let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(v) = guard.as_ref() {
        return Ok(v.clone());
    }
    let v = make()?;
    *guard = Some(v.clone());
    Ok(v)
}

impl<'a> MetricContext<'a> {
    pub fn new(model: &'a Model, train: &'a Dataset, cfg: &NumericsConfig) -> Result<Self> {
        model.check_dataset(train)?;
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        Ok(MetricContext {
            model,
            train,
            cfg: cfg.clone(),
            gradients: Mutex::new(None),
            hessian: Mutex::new(None),
            fisher: Mutex::new(None),
            cg_damping: Mutex::new(None),
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn train(&self) -> &Dataset {
        self.train
    }

    pub fn gradients(&self) -> Result<Arc<Vec<Vec<f64>>>> {
        memo(&self.gradients, || {
            let g: Vec<Vec<f64>> = self
                .train
                .instances()
                .par_iter()
                .map(|z| self.model.loss_gradient(z))
                .collect::<Result<_>>()?;
            Ok(Arc::new(g))
        })
    }

    /// Factor of `H + λI` for the training objective.
    pub fn hessian(&self) -> Result<Arc<PsdFactor>> {
        memo(&self.hessian, || {
            let f = dense_hessian(self.model, self.train, &self.cfg)?;
            log::debug!("hessian factored, damping {:.3e}", f.damping());
            Ok(Arc::new(f))
        })
    }

    /// Factor of the damped empirical Fisher.
    pub fn fisher(&self) -> Result<Arc<PsdFactor>> {
        memo(&self.fisher, || {
            let f = empirical_fisher(self.model, self.train, &self.cfg)?.factor()?;
            log::debug!("fisher factored, damping {:.3e}", f.damping());
            Ok(Arc::new(f))
        })
    }

    fn cg_damping(&self) -> Result<f64> {
        memo(&self.cg_damping, || {
            let trace = hessian_trace(self.model, self.train, &self.cfg)?;
            Ok(self.cfg.hessian_damping.resolve(trace, self.model.param_count()))
        })
    }

    /// Damping of the Hessian (dense or CG route) and of the Fisher, for
    /// whichever has been computed so far.
    pub fn computed_damping(&self) -> (Option<f64>, Option<f64>) {
        let read = |slot: &Mutex<Option<Arc<PsdFactor>>>| {
            slot.lock().unwrap_or_else(|e| e.into_inner()).as_ref().map(|f| f.damping())
        };
        let cg = *self.cg_damping.lock().unwrap_or_else(|e| e.into_inner());
        (read(&self.hessian).or(cg), read(&self.fisher))
    }

    pub fn resolved_inverse_solver(&self) -> InverseSolver {
        self.inverse_solver()
    }

    fn inverse_solver(&self) -> InverseSolver {
        match self.cfg.inverse_solver {
            InverseSolver::Auto if self.model.param_count() <= self.cfg.dense_limit => InverseSolver::Dense,
            InverseSolver::Auto => InverseSolver::ConjugateGradient,
            other => other,
        }
    }

    /// Builds the cached training-side vectors for one metric.
    pub fn precompute(&self, metric: MetricId) -> Result<MetricCache> {
        let mut cache = MetricCache {
            metric,
            model: self.model.clone(),
            train_vectors: Vec::new(),
            train_norms: Vec::new(),
            feature_norms: Vec::new(),
            test_transform: None,
            damping: None,
            solver: None,
            unconverged: 0,
        };
        match metric.representation() {
            Representation::Features(map) => {
                cache.train_vectors = self
                    .train
                    .instances()
                    .par_iter()
                    .map(|z| self.model.features(&z.features, map))
                    .collect::<Result<_>>()?;
            }
            Representation::Gradient => {
                cache.train_vectors = self.gradients()?.as_ref().clone();
            }
            Representation::HessianHalf | Representation::FisherHalf => {
                let factor = if metric.representation() == Representation::HessianHalf {
                    self.hessian()?
                } else {
                    self.fisher()?
                };
                cache.train_vectors = factor.apply_many(-0.5, &self.gradients()?);
                cache.damping = Some(factor.damping());
                cache.test_transform = Some(factor);
            }
            Representation::FisherInverse => {
                let factor = self.fisher()?;
                cache.train_vectors = factor.apply_many(-1.0, &self.gradients()?);
                cache.damping = Some(factor.damping());
            }
            Representation::HessianInverse => {
                let grads = self.gradients()?;
                let solver = self.inverse_solver();
                cache.solver = Some(solver);
                if solver == InverseSolver::Dense {
                    let factor = self.hessian()?;
                    cache.train_vectors = factor.apply_many(-1.0, &grads);
                    cache.damping = Some(factor.damping());
                } else {
                    let lambda = self.cg_damping()?;
                    let solved: Vec<_> = grads
                        .par_iter()
                        .map(|g| {
                            cg_solve(
                                |v| training_hessian_vector_product(self.model, self.train, v, &self.cfg),
                                g,
                                lambda,
                                self.cfg.cg_tol,
                                self.cfg.cg_max_iter,
                            )
                        })
                        .collect::<Result<_>>()?;
                    cache.unconverged = solved.iter().filter(|o| !o.converged).count();
                    if cache.unconverged > 0 {
                        log::warn!(
                            "{} of {} conjugate-gradient solves did not converge",
                            cache.unconverged,
                            solved.len()
                        );
                    }
                    cache.train_vectors = solved.into_iter().map(|o| o.x).collect();
                    cache.damping = Some(lambda);
                }
            }
        }
        cache.train_norms = cache.train_vectors.iter().map(|v| norm(v)).collect();
        cache.feature_norms = match metric.representation() {
            // `⟨g, M⁻¹g⟩ = ‖M^{-1/2}g‖²`: the norm of the symmetric feature map
            Representation::HessianInverse | Representation::FisherInverse => {
                let grads = self.gradients()?;
                grads
                    .iter()
                    .zip(&cache.train_vectors)
                    .map(|(g, h)| dot(g, h).max(0.0).sqrt())
                    .collect()
            }
            _ => cache.train_norms.clone(),
        };
        Ok(cache)
    }
}

/// Relevance of one training instance, with a flag for cosine scores that
/// were undefined because one side was a zero vector (scored as 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

/// Training-side vectors of one metric for one model.
#[derive(Debug, Clone)]
pub struct MetricCache {
    metric: MetricId,
    model: Model,
    train_vectors: Vec<Vec<f64>>,
    train_norms: Vec<f64>,
    feature_norms: Vec<f64>,
    test_transform: Option<Arc<PsdFactor>>,
    damping: Option<f64>,
    solver: Option<InverseSolver>,
    unconverged: usize,
}

impl MetricCache {
    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.train_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_vectors.is_empty()
    }

    pub fn train_vector(&self, i: usize) -> &[f64] {
        &self.train_vectors[i]
    }

    /// `‖φ(z_i)‖` of the metric's symmetric feature map. For IF and FK this
    /// is `sqrt(⟨g_i, M⁻¹g_i⟩)`, not the norm of the cached `M⁻¹g_i`.
    pub fn feature_norms(&self) -> &[f64] {
        &self.feature_norms
    }

    /// Damping of the Hessian or Fisher factor, when one was used.
    pub fn damping(&self) -> Option<f64> {
        self.damping
    }

    /// Route used for `H⁻¹g` (influence function only).
    pub fn solver(&self) -> Option<InverseSolver> {
        self.solver
    }

    pub fn unconverged_solves(&self) -> usize {
        self.unconverged
    }

    /// Multiplies one cached training vector by `factor`.
    pub fn scale_training_vector(&mut self, i: usize, factor: f64) {
        for v in &mut self.train_vectors[i] {
            *v *= factor;
        }
        self.train_norms[i] *= factor.abs();
        self.feature_norms[i] *= factor.abs();
    }

    /// The test-side vector. `z_test.label` must hold the predicted class.
    pub fn test_vector(&self, z_test: &Instance) -> Result<Vec<f64>> {
        match self.metric.representation() {
            Representation::Features(map) => self.model.features(&z_test.features, map),
            _ => {
                let g = self.model.loss_gradient(z_test)?;
                Ok(match &self.test_transform {
                    Some(f) => f.apply(-0.5, &g),
                    None => g,
                })
            }
        }
    }

    fn score_one(&self, t: &[f64], t_norm: f64, i: usize) -> Score {
        let v = &self.train_vectors[i];
        match self.metric.family().similarity() {
            Similarity::Dot => Score {
                value: dot(t, v),
                degenerate: false,
            },
            Similarity::NegSquaredDistance => Score {
                value: -squared_distance(t, v),
                degenerate: false,
            },
            Similarity::Cosine => match cosine_with_norms(t, v, t_norm, self.train_norms[i]) {
                Some(c) => Score {
                    value: c,
                    degenerate: false,
                },
                None => Score {
                    value: 0.0,
                    degenerate: true,
                },
            },
        }
    }

    pub fn relevance(&self, z_test: &Instance, i: usize) -> Result<Score> {
        if i >= self.len() {
            return Err(Error::invalid(format!(
                "training index {i} out of range for {} instances",
                self.len()
            )));
        }
        let t = self.test_vector(z_test)?;
        Ok(self.score_one(&t, norm(&t), i))
    }

    /// Scores against every training instance, plus whether any score was
    /// degenerate.
    pub fn scores(&self, z_test: &Instance) -> Result<(Vec<f64>, bool)> {
        let t = self.test_vector(z_test)?;
        let t_norm = norm(&t);
        let mut degenerate = false;
        let scores = (0..self.len())
            .map(|i| {
                let s = self.score_one(&t, t_norm, i);
                degenerate |= s.degenerate;
                s.value
            })
            .collect();
        Ok((scores, degenerate))
    }

    pub fn rank(&self, z_test: &Instance) -> Result<Ranking> {
        let (scores, degenerate) = self.scores(z_test)?;
        let mut ranking = Ranking::from_scores(&scores);
        ranking.degenerate = degenerate;
        Ok(ranking)
    }

    fn check_model(&self, model: &Model) -> Result<()> {
        if *model != self.model {
            return Err(Error::invalid(format!(
                "cache for `{}` was built for a different model",
                self.metric
            )));
        }
        Ok(())
    }
}

/// Relevance of training instance `i` for `z_test` under the cache's metric.
pub fn relevance(model: &Model, z_test: &Instance, i: usize, cache: &MetricCache) -> Result<Score> {
    cache.check_model(model)?;
    cache.relevance(z_test, i)
}

pub fn rank_training(model: &Model, z_test: &Instance, cache: &MetricCache) -> Result<Ranking> {
    cache.check_model(model)?;
    cache.rank(z_test)
}

/// `z` with its label replaced by the model's prediction, which is the
/// label every gradient metric must see for a test instance.
pub fn predicted_instance(model: &Model, z: &Instance) -> Result<Instance> {
    Ok(z.relabeled(model.predict(&z.features)?))
}

/// Training indices ordered by descending relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    order: Vec<usize>,
    /// Aligned with `order`.
    scores: Vec<f64>,
    degenerate: bool,
}

impl Ranking {
    /// Stable descending sort; exact ties keep ascending index order.
    pub fn from_scores(scores: &[f64]) -> Ranking {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&i| scores[i]).collect();
        Ranking {
            order,
            scores: sorted,
            degenerate: false,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn top(&self) -> usize {
        self.order[0]
    }

    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }

    /// True when some cosine score was undefined and scored as 0.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}
