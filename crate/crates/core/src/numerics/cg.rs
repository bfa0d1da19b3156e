use super::{axpy, dot, norm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖(H + λI)x - b‖ / ‖b‖` at the returned iterate.
    pub relative_residual: f64,
}

/// Solves `(H + λI) x = b` by conjugate gradients, where `hvp` applies `H`.
///
/// Stops once the relative residual drops below `tol`; after `max_iter`
/// iterations (or on non-positive curvature) the best iterate so far is
/// returned with `converged = false`.
pub fn cg_solve<F>(hvp: F, b: &[f64], damping: f64, tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(damping > 0.0) {
        return Err(Error::invalid("conjugate gradient needs a positive damping"));
    }
    let b_norm = norm(b);
    let n = b.len();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            converged: true,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let mut out = hvp(v)?;
        if out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: out.len(),
            });
        }
        axpy(damping, v, &mut out);
        Ok(out)
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best = (x.clone(), 1.0);

    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() || !rr.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value in conjugate gradient at iteration {it}"
            )));
        }
        if curvature <= 0.0 {
            log::warn!("conjugate gradient hit non-positive curvature at iteration {it}");
            break;
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        let rel = rr_next.sqrt() / b_norm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                converged: true,
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    Ok(CgOutcome {
        x: best.0,
        converged: false,
        iterations: max_iter,
        relative_residual: best.1,
    })
}
