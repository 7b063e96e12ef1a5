//! Primal-dual interior-point method for the projection problem.
//!
//! The single inequality `sum l(u_i) <= m*lambda` gets a dual variable `y`;
//! each iteration re-targets the barrier parameter from the surrogate gap
//! `y * (m*lambda - sum l(u))` and takes one Newton step on
//!
//! ```text
//! F_t(u, y) = [ u - x + y * grad L(u) ; -y (sum l(u) - m*lambda) - 1/t ]
//! ```
//!
//! The Jacobian's leading block is diagonal, so the step reduces to two O(m)
//! sweeps (dy from a Schur scalar, then du). A fraction-to-boundary
//! backtrack keeps `y > 0` and the iterate strictly feasible before an
//! Armijo decrease on `||F_t||`. The multiplier of the reduced KKT system is
//! `rho = m * y`.
//!
//! With the `eta = 2` polynomial loss the Hessian entry `l''` does not exist
//! at the kink; the selected subdifferential element stands in, and results
//! carry `hessian_surrogate = true`.

use crate::linalg::pairwise_sum;
use crate::loss::{LossError, LossKind};

use super::{
    kkt_certificate, IterationCounts, NewtonTrace, ProjectionError, ProjectionInstance,
    ProjectionResult, SolverKind,
};

#[derive(Debug, Clone, Copy)]
pub struct IpmParams {
    /// Surrogate-gap reduction factor; `None` picks 10, or 50 once
    /// `m >= 10^4` where the larger factor saves outer iterations.
    pub mu: Option<f64>,
    /// Backtracking shrink factor.
    pub gamma: f64,
    /// Armijo slope factor.
    pub nu: f64,
    /// Initial dual value.
    pub y0: f64,
    /// Tolerance on both `||F_t||` and the surrogate gap.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Strict-feasibility margin of the constructed interior start: the
    /// loss budget of `u0` is `m * lambda * (1 - start_margin)`. A thin
    /// margin leaves no room for Newton steps when the optimal multiplier is
    /// large, so the default starts at half the budget.
    pub start_margin: f64,
}

impl Default for IpmParams {
    fn default() -> Self {
        IpmParams {
            mu: None,
            gamma: 0.5,
            nu: 0.05,
            y0: 10.0,
            tol: 1e-11,
            max_iter: 400,
            max_backtracks: 120,
            start_margin: 0.5,
        }
    }
}

pub fn project_ipm(
    inst: &ProjectionInstance,
    params: &IpmParams,
) -> Result<(ProjectionResult, NewtonTrace), ProjectionError> {
    match params.mu {
        Some(mu) => run_ipm(inst, params, mu),
        None => {
            // Aggressive gap reduction is fast but can pin an iterate
            // against the feasibility boundary on instances with extreme
            // coordinates; a small mu tracks the central path and frees it.
            let mu = if inst.dim() >= 10_000 { 50.0 } else { 10.0 };
            match run_ipm(inst, params, mu) {
                Err(
                    ProjectionError::MaxIterations { .. } | ProjectionError::LineSearchStall { .. },
                ) => {
                    let slow = IpmParams {
                        max_iter: params.max_iter.max(800),
                        ..*params
                    };
                    run_ipm(inst, &slow, 2.0)
                }
                other => other,
            }
        }
    }
}

fn run_ipm(
    inst: &ProjectionInstance,
    params: &IpmParams,
    mu: f64,
) -> Result<(ProjectionResult, NewtonTrace), ProjectionError> {
    let m = inst.dim();
    let mf = m as f64;
    let target = mf * inst.lambda();
    let surrogate =
        matches!(inst.loss().kind(), LossKind::PiecewisePolynomial { eta } if eta == 2.0);

    let mut u = strictly_feasible_start(inst, params.start_margin)?;
    if !(params.y0 > 0.0) {
        return Err(ProjectionError::InfeasibleStart);
    }
    // Dual start matched to the primal start: the least-squares minimizer of
    // ||u0 - x + y grad L(u0)||, floored at y0. A fixed small y0 leaves an
    // enormous stationarity residual when the optimal multiplier is large
    // (flat exponential losses), and the feasibility backtracking then
    // crushes every Newton step.
    let mut y = {
        let mut num = 0.0;
        let mut den = 0.0;
        for (ui, xi) in u.iter().zip(inst.x()) {
            let d = inst.loss().deriv(*ui)?;
            num += d * (xi - ui);
            den += d * d;
        }
        if den > 0.0 {
            (num / den).max(params.y0)
        } else {
            params.y0
        }
    };

    let mut trace = NewtonTrace::default();
    let mut counts = IterationCounts::default();
    let mut grad = vec![0.0; m];
    let mut f_u = vec![0.0; m];
    let mut trial = vec![0.0; m];

    // Sum of losses, or None when a trial point overflows. Uses the same
    // pairwise kernel as the iteration loop so the line-search feasibility
    // decision and the next iterate's slack agree bitwise.
    let loss_sum = |u: &[f64]| -> Result<Option<f64>, ProjectionError> {
        let mut vals = Vec::with_capacity(u.len());
        for &v in u {
            match inst.loss().value(v) {
                Ok(l) => vals.push(l),
                Err(LossError::Overflow { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Some(pairwise_sum(&vals)))
    };
    let fnorm_at = |u: &[f64], y: f64, inv_t: f64| -> Result<Option<f64>, ProjectionError> {
        let Some(su) = loss_sum(u)? else {
            return Ok(None);
        };
        let mut sq = Vec::with_capacity(u.len() + 1);
        for (ui, xi) in u.iter().zip(inst.x()) {
            let d = match inst.loss().deriv(*ui) {
                Ok(d) => d,
                Err(LossError::Overflow { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            let r = ui - xi + y * d;
            sq.push(r * r);
        }
        let fy = -y * (su - target) - inv_t;
        sq.push(fy * fy);
        Ok(Some(pairwise_sum(&sq).sqrt()))
    };

    let mut etas = vec![0.0; m];
    for _ in 0..params.max_iter {
        let mut values = Vec::with_capacity(m);
        for i in 0..m {
            let (v, d, e) = inst.loss().value_and_derivs(u[i])?;
            values.push(v);
            grad[i] = d;
            etas[i] = e;
        }
        let su = pairwise_sum(&values);
        let slack = target - su;
        let gap = y * slack;
        debug_assert!(slack > 0.0 && y > 0.0);
        let inv_t = gap / mu; // 1/t with t = mu / gap

        for i in 0..m {
            f_u[i] = u[i] - inst.x()[i] + y * grad[i];
        }
        let f_y = gap - inv_t;
        let fnorm = {
            let mut sq: Vec<f64> = f_u.iter().map(|r| r * r).collect();
            sq.push(f_y * f_y);
            pairwise_sum(&sq).sqrt()
        };
        // The slack quantizes at the f64 resolution of the loss sum, so the
        // surrogate gap cannot settle below y times that; floor the
        // effective tolerance accordingly.
        let tol = params.tol.max(8.0 * f64::EPSILON * target * y.max(1.0));
        if fnorm < tol && gap < tol {
            trace.push(fnorm, 1.0, mf * y);
            let result = ProjectionResult {
                rho: mf * y,
                kkt_residual: kkt_certificate(inst, &u, mf * y)?,
                u,
                iterations: counts,
                solver: SolverKind::Ipm,
                hessian_surrogate: surrogate,
            };
            return Ok((result, trace));
        }

        // Diagonal block elimination: dy from the Schur scalar, then du.
        let mut inv_d = Vec::with_capacity(m);
        for i in 0..m {
            inv_d.push(1.0 / (1.0 + y * etas[i]));
        }
        let gd_fu: Vec<f64> = (0..m).map(|i| grad[i] * inv_d[i] * f_u[i]).collect();
        let gd_g: Vec<f64> = (0..m).map(|i| grad[i] * inv_d[i] * grad[i]).collect();
        let dy = (-f_y - y * pairwise_sum(&gd_fu)) / (y * pairwise_sum(&gd_g) + slack);
        if !dy.is_finite() {
            return Err(ProjectionError::SingularJacobian);
        }
        let du: Vec<f64> = (0..m)
            .map(|i| -inv_d[i] * (f_u[i] + dy * grad[i]))
            .collect();

        // Phase 1: dual positivity and strict primal feasibility. Strictness
        // is always attainable because the current iterate is strictly
        // inside.
        let mut alpha = 1.0f64;
        let mut backtracks = 0usize;
        loop {
            if y + alpha * dy > 0.0 {
                for i in 0..m {
                    trial[i] = u[i] + alpha * du[i];
                }
                match loss_sum(&trial)? {
                    Some(s) if s < target => break,
                    _ => {}
                }
            }
            alpha *= params.gamma;
            backtracks += 1;
            if backtracks > params.max_backtracks {
                return Err(ProjectionError::LineSearchStall {
                    solver: SolverKind::Ipm,
                    backtracks,
                });
            }
        }
        // Phase 2: Armijo decrease of ||F_t|| at fixed barrier target.
        loop {
            for i in 0..m {
                trial[i] = u[i] + alpha * du[i];
            }
            let trial_y = y + alpha * dy;
            if trial_y > 0.0 {
                if let Some(norm) = fnorm_at(&trial, trial_y, inv_t)? {
                    if norm <= (1.0 - params.nu * alpha) * fnorm {
                        break;
                    }
                }
            }
            alpha *= params.gamma;
            backtracks += 1;
            if backtracks > params.max_backtracks {
                return Err(ProjectionError::LineSearchStall {
                    solver: SolverKind::Ipm,
                    backtracks,
                });
            }
        }
        std::mem::swap(&mut u, &mut trial);
        y += alpha * dy;
        counts.outer += 1;
        counts.backtracks += backtracks;
        trace.push(fnorm, alpha, mf * y);
    }

    let residual = trace.records.last().map(|r| r.residual).unwrap_or(f64::NAN);
    Err(ProjectionError::MaxIterations {
        solver: SolverKind::Ipm,
        iterations: counts.outer,
        residual,
        trace,
    })
}

/// Builds `u0` with `sum l(u0) <= m * lambda * (1 - margin)`.
///
/// Polynomial losses clip at the flat threshold, which zeroes the loss sum.
/// Exponential losses shift every coordinate down by the closed-form amount
/// `delta = (logsumexp(beta x) - ln(m lambda (1 - margin))) / beta`.
fn strictly_feasible_start(
    inst: &ProjectionInstance,
    margin: f64,
) -> Result<Vec<f64>, ProjectionError> {
    let target = inst.dim() as f64 * inst.lambda() * (1.0 - margin);
    if !(target > 0.0) {
        return Err(ProjectionError::InfeasibleStart);
    }
    match inst.loss().kind() {
        LossKind::PiecewisePolynomial { .. } => {
            let a = inst.loss().flat_threshold();
            Ok(inst.x().iter().map(|&v| v.min(a)).collect())
        }
        LossKind::Exponential { beta } => {
            let max_bx = inst
                .x()
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(beta * v));
            let shifted: Vec<f64> = inst
                .x()
                .iter()
                .map(|&v| (beta * v - max_bx).exp())
                .collect();
            let lse = max_bx + pairwise_sum(&shifted).ln();
            let delta = ((lse - target.ln()) / beta).max(0.0);
            Ok(inst.x().iter().map(|&v| v - delta).collect())
        }
    }
}
