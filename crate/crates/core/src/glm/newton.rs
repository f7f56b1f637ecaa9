//! Damped Fisher scoring for concave objectives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::{Coefficients, FitResult};
use super::linalg::solve_spd;
use crate::error::{Error, Result};

/// Stopping rules for Fisher scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Bound on the relative step norm and on the per-observation gradient norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings allowed when the objective decreases.
    pub max_halvings: usize,
    /// Largest coefficient magnitude treated as finite; beyond it the fit is reported diverged.
    pub divergence_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, max_halvings: 20, divergence_bound: 1e6 }
    }
}

/// An objective to maximize together with its gradient and a positive
/// definite curvature matrix (expected information or negative Hessian).
pub trait Objective {
    fn dim(&self) -> usize;

    /// Effective number of observations used to normalise the gradient.
    fn scale(&self) -> f64;

    fn value(&self, beta: &[f64]) -> Result<f64>;

    fn derivatives(&self, beta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

pub fn maximize<O: Objective + ?Sized>(obj: &O, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let dim = obj.dim();
    if init.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: init.len() });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial coefficients must be finite".into()));
    }
    let scale = obj.scale().max(f64::MIN_POSITIVE);
    let mut beta = DVector::from_column_slice(init);
    let mut value = obj.value(beta.as_slice())?;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;

    loop {
        let (grad, info) = obj.derivatives(beta.as_slice())?;
        grad_norm = grad.norm() / scale;
        if last_step < opts.tol && grad_norm < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let step = solve_spd(&info, &grad)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step * t;
            if let Ok(v) = obj.value(cand.as_slice()) {
                if v.is_finite() && v >= value - 1e-10 * (1.0 + value.abs()) {
                    accepted = Some((cand, v));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, v)) => {
                last_step = (&cand - &beta).norm() / (1.0 + beta.norm());
                beta = cand;
                value = v;
            }
            None => {
                // no ascent direction left; report the current point
                let (grad, _) = obj.derivatives(beta.as_slice())?;
                grad_norm = grad.norm() / scale;
                converged = grad_norm < opts.tol;
                break;
            }
        }
        if beta.amax() > opts.divergence_bound {
            break;
        }
    }

    Ok(FitResult {
        coefficients: Coefficients::new(beta.as_slice().to_vec()),
        covariance: None,
        iterations,
        converged,
        final_gradient_norm: grad_norm,
        objective: value,
    })
}
