use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{cosine, norm};

/// Grad-cos of a logistic-regression pair split into its residual and
/// input factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcDecomposition {
    /// `cos(r, r')` of the softmax residuals.
    pub cos_residual: f64,
    /// `cos(x, x')`.
    pub cos_input: f64,
    /// Grad-cos over the full parameter vector.
    pub gc: f64,
    /// `gc - cos_residual * cos_input`; nonzero only when the model has
    /// biases, which the factorization does not cover.
    pub bias_discrepancy: f64,
    /// A residual or input was zero; all fields are then 0.
    pub degenerate: bool,
}

impl GcDecomposition {
    pub fn product(&self) -> f64 {
        self.cos_residual * self.cos_input
    }
}

/// For bias-free logistic regression the loss gradient is `r ⊗ x`, so
/// `cos(r⊗x, r'⊗x') = cos(r, r')·cos(x, x')`.
pub fn gc_decomposition(model: &Model, z: &Instance, z_prime: &Instance) -> Result<GcDecomposition> {
    if !model.is_logreg() {
        return Err(Error::invalid("grad-cos decomposition needs logistic regression"));
    }
    let (r, rp) = (model.residual(z)?, model.residual(z_prime)?);
    let cr = cosine(&r, &rp);
    let cx = cosine(&z.features, &z_prime.features);
    let (g, gp) = (model.loss_gradient(z)?, model.loss_gradient(z_prime)?);
    let gc = cosine(&g, &gp);
    match (cr, cx, gc) {
        (Some(cos_residual), Some(cos_input), Some(gc)) => Ok(GcDecomposition {
            cos_residual,
            cos_input,
            gc,
            bias_discrepancy: gc - cos_residual * cos_input,
            degenerate: false,
        }),
        _ => Ok(GcDecomposition {
            cos_residual: 0.0,
            cos_input: 0.0,
            gc: 0.0,
            bias_discrepancy: 0.0,
            degenerate: true,
        }),
    }
}

/// `‖φ_i‖ < ‖φ_j‖·cos(φ_test, φ_j)`, which is sufficient for
/// `⟨φ_test, φ_i⟩ < ⟨φ_test, φ_j⟩`.
pub fn dominance_condition(phi_i: &[f64], phi_j: &[f64], phi_test: &[f64]) -> bool {
    match cosine(phi_test, phi_j) {
        Some(c) => norm(phi_i) < norm(phi_j) * c,
        None => false,
    }
}

/// Direct check of the ordering the condition implies.
#[cfg(test)]
fn dot_order_holds(phi_i: &[f64], phi_j: &[f64], phi_test: &[f64]) -> bool {
    crate::numerics::dot(phi_test, phi_i) < crate::numerics::dot(phi_test, phi_j)
}
