use super::{cg_solve, dot, norm, weighted_hessian_vector_product, NumericsConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone)]
pub struct Stationary {
    pub model: Model,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Damped Newton iterations on the (optionally weighted) training objective
/// until `‖∇‖ <= tol`. Steps come from CG on the Hessian and are accepted
/// by backtracking on the objective.
///
/// Meant for models whose objective is strictly convex, such as logistic
/// regression with an L2 penalty.
pub fn fit_to_stationarity(
    model: &Model,
    data: &Dataset,
    weights: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Stationary> {
    if let Some(w) = weights {
        if w.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                actual: w.len(),
            });
        }
    }
    let cfg = NumericsConfig::default();
    let mut model = model.clone();
    let (mut obj, mut grad) = model.weighted_objective(data, weights)?;
    let p = model.param_count();
    for it in 0..max_iter {
        let gn = norm(&grad);
        if gn <= tol {
            return Ok(Stationary {
                model,
                gradient_norm: gn,
                iterations: it,
            });
        }
        let step = cg_solve(
            |v| weighted_hessian_vector_product(&model, data, weights, v, &cfg),
            &grad,
            1e-12,
            1e-12,
            4 * p + 20,
        )?;
        let mut dir = step.x;
        if dot(&dir, &grad) <= 0.0 {
            dir = grad.clone();
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial: Vec<f64> = model.theta().iter().zip(&dir).map(|(a, d)| a - t * d).collect();
            let cand = model.with_theta(trial)?;
            let (o, g) = cand.weighted_objective(data, weights)?;
            let armijo = o <= obj - 1e-4 * t * dot(&dir, &grad);
            // near the optimum the objective stops resolving the decrease
            let flat = o <= obj + 1e-14 * obj.abs() && norm(&g) < 0.5 * norm(&grad);
            if o.is_finite() && (armijo || flat) {
                model = cand;
                obj = o;
                grad = g;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // at the floor of floating-point progress
            let gn = norm(&grad);
            return Ok(Stationary {
                model,
                gradient_norm: gn,
                iterations: it,
            });
        }
    }
    let gn = norm(&grad);
    Ok(Stationary {
        model,
        gradient_norm: gn,
        iterations: max_iter,
    })
}
