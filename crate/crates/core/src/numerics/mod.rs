//! Linear-algebra kernels shared by the metrics and the evaluation suite.

mod cg;
mod fisher;
mod hessian;
mod newton;
mod rank;

use serde::{Deserialize, Serialize};

pub use cg::{cg_solve, CgOutcome};
pub use fisher::{empirical_fisher, FisherMatrix};
pub use hessian::{
    dense_hessian, hessian_matrix, hessian_trace, training_hessian_vector_product, weighted_hessian_vector_product,
    PsdFactor,
};
pub use newton::{fit_to_stationarity, Stationary};
pub use rank::{average_ranks, spearman, spearman_null_ci};

/// How the ridge term added to H or I is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    /// `ratio * trace(M) / dim(M)` of the undamped matrix.
    Relative(f64),
    Fixed(f64),
}

impl Default for Damping {
    fn default() -> Self {
        Damping::Relative(0.01)
    }
}

impl Damping {
    pub fn resolve(self, trace: f64, dim: usize) -> f64 {
        let lambda = match self {
            Damping::Relative(r) => r * trace / dim.max(1) as f64,
            Damping::Fixed(l) => l,
        };
        if lambda.is_finite() && lambda > 0.0 {
            lambda
        } else {
            MIN_DAMPING
        }
    }
}

pub(crate) const MIN_DAMPING: f64 = 1e-12;

/// Which route produces `H^{-1} g` for the influence function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InverseSolver {
    /// Dense factor when the model fits under `dense_limit`, CG otherwise.
    #[default]
    Auto,
    Dense,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    pub hessian_damping: Damping,
    pub fisher_damping: Damping,
    pub dense_limit: usize,
    pub inverse_solver: InverseSolver,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Relative step for finite-difference Hessian-vector products.
    pub fd_eps: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            hessian_damping: Damping::default(),
            fisher_damping: Damping::default(),
            dense_limit: 4096,
            inverse_solver: InverseSolver::Auto,
            cg_tol: 1e-10,
            cg_max_iter: 2000,
            fd_eps: 1e-5,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, or `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    cosine_with_norms(a, b, norm(a), norm(b))
}

pub(crate) fn cosine_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> Option<f64> {
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(cosine(&[2.0, 0.0], &[5.0, 0.0]), Some(1.0));
        // 32 / sqrt(14 * 77)
        let c = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974_631_846).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), None);
    }

    #[test]
    fn cosine_is_clamped() {
        let a = [0.1, 0.2, 0.3];
        let c = cosine(&a, &a).unwrap();
        assert!(c <= 1.0);
        let b = [-0.1, -0.2, -0.3];
        assert!(cosine(&a, &b).unwrap() >= -1.0);
    }

    #[test]
    fn damping_resolution() {
        assert_eq!(Damping::Fixed(0.5).resolve(10.0, 3), 0.5);
        assert!((Damping::Relative(0.01).resolve(200.0, 100) - 0.02).abs() < 1e-15);
        assert_eq!(Damping::Relative(0.01).resolve(0.0, 100), MIN_DAMPING);
    }
}
