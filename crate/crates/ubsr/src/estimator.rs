//! UBSR estimation from samples.
//!
//! Under sample average approximation the risk of a position with samples
//! `x_1..x_m` is the root of `phi(t) = (1/m) sum_i l(-x_i - t) - lambda`,
//! which is nonincreasing in `t` and crosses zero whenever
//! `lambda > inf l`. The root is found by a bracketed Newton/bisection
//! hybrid.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::try_pairwise_map_sum;
use crate::loss::{LossError, LossFunction};

/// Default residual tolerance for [`estimate_ubsr`].
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error)]
pub enum EstimatorError {
    #[error("risk level {lambda} does not exceed inf l = {inf}; no sign change exists")]
    NoSignChange { lambda: f64, inf: f64 },
    #[error("samples must be a nonempty vector of finite values")]
    InvalidSamples,
    #[error("bracketing failed after {0} expansions")]
    BracketFailure(usize),
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Result of a UBSR estimation.
#[derive(Debug, Clone, Serialize)]
pub struct UbsrEstimate {
    /// Estimated shortfall risk of the position.
    pub t: f64,
    /// `(1/m) sum l(-x_i - t) - lambda` at the returned `t`.
    pub residual: f64,
    /// Residual evaluations performed.
    pub iterations: usize,
}

/// Estimates the UBSR of a sampled position to residual tolerance `tol`.
pub fn estimate_ubsr(
    samples: &[f64],
    lambda: f64,
    loss: &LossFunction,
    tol: f64,
) -> Result<UbsrEstimate, EstimatorError> {
    if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
        return Err(EstimatorError::InvalidSamples);
    }
    if !(lambda > loss.inf_value()) {
        return Err(EstimatorError::NoSignChange {
            lambda,
            inf: loss.inf_value(),
        });
    }
    let m = samples.len() as f64;
    let residual = |t: f64| -> Result<f64, LossError> {
        Ok(try_pairwise_map_sum(samples, &|x| loss.value(-x - t))? / m - lambda)
    };
    // During bracket expansion an exponential overflow on the low side only
    // means the residual is enormously positive, which is all the bracket
    // needs to know.
    let residual_for_sign = |t: f64| -> Result<f64, LossError> {
        match residual(t) {
            Ok(r) => Ok(r),
            Err(LossError::Overflow { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let max_neg = samples.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(-x));
    let min_neg = samples.iter().fold(f64::INFINITY, |m, &x| m.min(-x));
    let mut iterations = 0usize;

    // Initial bracket [-max(-x) - K, -min(-x) + K], K doubled until the
    // residual changes sign across it.
    let mut k = 1.0;
    let (mut lo, mut hi);
    let mut expansions = 0usize;
    loop {
        lo = -max_neg - k;
        hi = -min_neg + k;
        iterations += 2;
        let rlo = residual_for_sign(lo)?;
        let rhi = residual_for_sign(hi)?;
        if rlo >= 0.0 && rhi <= 0.0 {
            break;
        }
        k *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(EstimatorError::BracketFailure(expansions));
        }
    }

    // Safeguarded Newton: steps that leave the bracket fall back to bisection.
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(t)?;
        iterations += 1;
        if r.abs() <= tol {
            return Ok(UbsrEstimate {
                t,
                residual: r,
                iterations,
            });
        }
        if r > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = -try_pairwise_map_sum(samples, &|x| loss.deriv(-x - t))? / m;
        let newton = if slope != 0.0 {
            t - r / slope
        } else {
            f64::NAN
        };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(EstimatorError::MaxIterations(200))
}
