use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{NumericsConfig, PsdFactor};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;

/// Empirical Fisher `(1/N) Σ g_i g_iᵀ + λI` of the training loss.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    /// Damped and symmetric.
    matrix: DMatrix<f64>,
    damping: f64,
}

impl FisherMatrix {
    pub fn from_gradients(gradients: &[Vec<f64>], damping: crate::numerics::Damping) -> Result<Self> {
        let n = gradients.len();
        if n == 0 {
            return Err(Error::invalid("empirical Fisher needs at least one gradient"));
        }
        let p = gradients[0].len();
        let g = DMatrix::from_fn(p, n, |i, j| gradients[j][i]);
        let mut m = (&g * g.transpose()) / n as f64;
        // g gᵀ is symmetric in exact arithmetic; force it bitwise
        for i in 0..p {
            for j in 0..i {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        let lambda = damping.resolve(m.trace(), p);
        for i in 0..p {
            m[(i, i)] += lambda;
        }
        Ok(FisherMatrix {
            matrix: m,
            damping: lambda,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Eigen-factor of the damped matrix, clipped at the damping.
    pub fn factor(&self) -> Result<PsdFactor> {
        let n = self.matrix.nrows();
        let undamped = &self.matrix - DMatrix::identity(n, n) * self.damping;
        PsdFactor::from_symmetric(undamped, self.damping)
    }
}

pub fn empirical_fisher(model: &Model, train: &Dataset, cfg: &NumericsConfig) -> Result<FisherMatrix> {
    let p = model.param_count();
    if p > cfg.dense_limit {
        return Err(Error::DenseLimit {
            param_count: p,
            limit: cfg.dense_limit,
        });
    }
    let grads: Vec<Vec<f64>> = train
        .instances()
        .par_iter()
        .map(|z| model.loss_gradient(z))
        .collect::<Result<_>>()?;
    FisherMatrix::from_gradients(&grads, cfg.fisher_damping)
}
