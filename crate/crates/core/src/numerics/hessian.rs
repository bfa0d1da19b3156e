use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::{norm, NumericsConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{softmax, Model};

/// `H v` for the Hessian of the training objective (mean cross entropy plus
/// the model's L2 penalty).
///
/// Logistic regression uses the closed form `(diag(p) - p pᵀ) ⊗ x̃ x̃ᵀ`;
/// MLPs use a central difference of the full gradient with step
/// `eps * (1 + ‖θ‖) / ‖v‖`.
pub fn training_hessian_vector_product(
    model: &Model,
    train: &Dataset,
    v: &[f64],
    cfg: &NumericsConfig,
) -> Result<Vec<f64>> {
    weighted_hessian_vector_product(model, train, None, v, cfg)
}

/// As [`training_hessian_vector_product`], with per-instance loss weights
/// (each divided by `N`).
pub fn weighted_hessian_vector_product(
    model: &Model,
    train: &Dataset,
    weights: Option<&[f64]>,
    v: &[f64],
    cfg: &NumericsConfig,
) -> Result<Vec<f64>> {
    if v.len() != model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            actual: v.len(),
        });
    }
    model.check_dataset(train)?;
    let v_norm = norm(v);
    if v_norm == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    if model.is_logreg() {
        return Ok(logreg_hvp(model, train, weights, v));
    }
    let theta = model.theta();
    let h = cfg.fd_eps * (1.0 + norm(theta)) / v_norm;
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + h * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - h * d).collect();
    let (_, g_plus) = model.with_theta(plus)?.weighted_objective(train, weights)?;
    let (_, g_minus) = model.with_theta(minus)?.weighted_objective(train, weights)?;
    Ok(g_plus
        .iter()
        .zip(&g_minus)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect())
}

fn logreg_hvp(model: &Model, train: &Dataset, weights: Option<&[f64]>, v: &[f64]) -> Vec<f64> {
    let spec = model.spec();
    let (d, c) = (spec.input_dim, spec.class_count);
    let bias_at = spec.bias.then_some(c * d);
    let n = train.len() as f64;
    let mut out = vec![0.0; v.len()];
    let mut u = vec![0.0; c];
    for (i, z) in train.instances().iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]) / n;
        if w == 0.0 {
            continue;
        }
        let x = &z.features;
        let p = softmax(&model.logits(x).expect("dimensions checked"));
        for (k, uk) in u.iter_mut().enumerate() {
            let row = &v[k * d..(k + 1) * d];
            *uk = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + bias_at.map_or(0.0, |b| v[b + k]);
        }
        let pu: f64 = p.iter().zip(&u).map(|(a, b)| a * b).sum();
        for k in 0..c {
            let au = w * p[k] * (u[k] - pu);
            if au == 0.0 {
                continue;
            }
            for (o, xj) in out[k * d..(k + 1) * d].iter_mut().zip(x) {
                *o += au * xj;
            }
            if let Some(b) = bias_at {
                out[b + k] += au;
            }
        }
    }
    let lam = spec.l2_penalty;
    if lam > 0.0 {
        for (o, vi) in out.iter_mut().zip(v) {
            *o += lam * vi;
        }
    }
    out
}

/// Assembles the symmetrized training Hessian column by column.
pub fn hessian_matrix(model: &Model, train: &Dataset, cfg: &NumericsConfig) -> Result<DMatrix<f64>> {
    let p = model.param_count();
    if p > cfg.dense_limit {
        return Err(Error::DenseLimit {
            param_count: p,
            limit: cfg.dense_limit,
        });
    }
    let columns: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            training_hessian_vector_product(model, train, &e, cfg)
        })
        .collect::<Result<_>>()?;
    let h = DMatrix::from_fn(p, p, |i, j| columns[j][i]);
    Ok((&h + h.transpose()) * 0.5)
}

/// Trace of the training Hessian: exact from basis HVPs under the dense
/// limit, otherwise a Hutchinson estimate over 64 fixed Rademacher probes.
pub fn hessian_trace(model: &Model, train: &Dataset, cfg: &NumericsConfig) -> Result<f64> {
    use rand::Rng;
    let p = model.param_count();
    if p <= cfg.dense_limit {
        let diag: Vec<f64> = (0..p)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                training_hessian_vector_product(model, train, &e, cfg).map(|h| h[j])
            })
            .collect::<Result<_>>()?;
        return Ok(diag.iter().sum());
    }
    const PROBES: u64 = 64;
    let total: Vec<f64> = (0..PROBES)
        .into_par_iter()
        .map(|k| {
            let mut rng = crate::seed::rng(0x7ace ^ k);
            let v: Vec<f64> = (0..p)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            training_hessian_vector_product(model, train, &v, cfg).map(|h| super::dot(&v, &h))
        })
        .collect::<Result<_>>()?;
    Ok(total.iter().sum::<f64>() / PROBES as f64)
}

/// Eigendecomposition of a damped PSD matrix with eigenvalues clipped
/// from below at the damping.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    /// Descending, every entry `>= damping`.
    eigenvalues: Vec<f64>,
    /// Orthonormal columns aligned with `eigenvalues`.
    eigenvectors: DMatrix<f64>,
    damping: f64,
}

impl PsdFactor {
    /// Factors `m + damping·I`. `m` must be symmetric.
    pub fn from_symmetric(m: DMatrix<f64>, damping: f64) -> Result<Self> {
        if !(damping > 0.0) {
            return Err(Error::invalid("damping must be positive"));
        }
        let n = m.nrows();
        let damped = m + DMatrix::identity(n, n) * damping;
        if damped.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        let eig = SymmetricEigen::new(damped);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order
            .iter()
            .map(|&k| eig.eigenvalues[k].max(damping))
            .collect();
        let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(PsdFactor {
            eigenvalues,
            eigenvectors,
            damping,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q diag(λ^power) Qᵀ v`.
    pub fn apply(&self, power: f64, v: &[f64]) -> Vec<f64> {
        let q = &self.eigenvectors;
        let mut coeffs = q.tr_mul(&DVector::from_column_slice(v));
        for (c, l) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= l.powf(power);
        }
        (q * coeffs).as_slice().to_vec()
    }

    /// Applies `power` to many vectors at once.
    pub fn apply_many(&self, power: f64, vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if vs.is_empty() {
            return Vec::new();
        }
        let n = self.dim();
        let cols = DMatrix::from_fn(n, vs.len(), |i, j| vs[j][i]);
        let mut coeffs = self.eigenvectors.tr_mul(&cols);
        for (k, l) in self.eigenvalues.iter().enumerate() {
            let s = l.powf(power);
            coeffs.row_mut(k).scale_mut(s);
        }
        let out = &self.eigenvectors * coeffs;
        (0..vs.len()).map(|j| out.column(j).as_slice().to_vec()).collect()
    }
}

/// Dense factor of `H + λI` for the training objective, with `λ` chosen by
/// `cfg.hessian_damping` from the undamped trace.
pub fn dense_hessian(model: &Model, train: &Dataset, cfg: &NumericsConfig) -> Result<PsdFactor> {
    let h = hessian_matrix(model, train, cfg)?;
    let lambda = cfg.hessian_damping.resolve(h.trace(), h.nrows());
    PsdFactor::from_symmetric(h, lambda)
}
