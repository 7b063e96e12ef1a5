//! Semismooth Newton method on the full reduced KKT system.
//!
//! With `y = (u, rho)` the system is
//! `F(y) = [ u - x + (rho/m) grad L(u) ; (1/m) L(u) - lambda ]`, whose
//! generalized Jacobian
//! `[[ I + (rho/m) D, (1/m) grad L ], [ (1/m) grad L^T, 0 ]]` has diagonal
//! `D`, so the Newton direction comes out in closed form in O(m). A two-phase
//! backtracking line search first keeps some coordinate above the flat
//! threshold `a` (otherwise the Jacobian goes singular), then enforces an
//! Armijo-style decrease `||F(y + alpha d)|| <= (1 - sigma*alpha) ||F(y)||`.

use crate::linalg::{pairwise_dot, pairwise_sum};
use crate::loss::LossError;

use super::{
    kkt_certificate, IterationCounts, NewtonTrace, ProjectionError, ProjectionInstance,
    ProjectionResult, SolverKind,
};

#[derive(Debug, Clone, Copy)]
pub struct DirSsnParams {
    /// Armijo slope factor.
    pub sigma: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Tolerance on the KKT certificate.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtrack budget per line search before reporting a stall.
    pub max_backtracks: usize,
    /// An exhausted line search means no representable decrease of `||F||`
    /// is left. When the certificate already sits below this cap (the
    /// complementarity floor grows with `rho`, so `tol` itself may be
    /// unattainable), the iterate is returned instead of a stall error.
    pub stall_cert_cap: f64,
}

impl Default for DirSsnParams {
    fn default() -> Self {
        DirSsnParams {
            sigma: 1e-4,
            beta: 0.5,
            tol: 1e-10,
            max_iter: 200,
            max_backtracks: 60,
            stall_cert_cap: 1e-8,
        }
    }
}

/// Default start: shift `x` down uniformly onto the level set
/// `mean l(x - delta) = lambda` (a scalar root problem), then take the
/// least-squares multiplier minimizing the stationarity residual there. The
/// naive `(x, 1)` start is valid but leaves Newton hopelessly far from
/// multipliers of order `m`, where the Armijo search crawls.
fn matched_start(inst: &ProjectionInstance) -> Result<(Vec<f64>, f64), ProjectionError> {
    let negated: Vec<f64> = inst.x().iter().map(|v| -v).collect();
    let delta = crate::estimator::estimate_ubsr(&negated, inst.lambda(), inst.loss(), 1e-10)
        .map_err(|_| ProjectionError::SingularJacobian)?
        .t;
    if !(delta > 0.0) {
        // x is essentially on the boundary; the classic start is fine there.
        return Ok((inst.x().to_vec(), 1.0));
    }
    let u0: Vec<f64> = inst.x().iter().map(|v| v - delta).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for ui in &u0 {
        let d = inst.loss().deriv(*ui)?;
        num += d * delta;
        den += d * d;
    }
    if den > 0.0 && num > 0.0 {
        Ok((u0, num / den))
    } else {
        Ok((inst.x().to_vec(), 1.0))
    }
}

/// Projects an outside point by Newton on the KKT system, starting from
/// `y0 = (u0, rho0)` or the matched default start, which keeps the loss
/// gradient nonzero whenever `x` is outside the set.
pub fn project_dirssn(
    inst: &ProjectionInstance,
    y0: Option<(Vec<f64>, f64)>,
    params: &DirSsnParams,
) -> Result<(ProjectionResult, NewtonTrace), ProjectionError> {
    let m = inst.dim();
    let mf = m as f64;
    let a = inst.loss().flat_threshold();
    let (mut u, mut rho) = match y0 {
        Some(pair) => pair,
        None => matched_start(inst)?,
    };
    if u.len() != m {
        return Err(ProjectionError::InvalidInstance(
            "y0 dimension mismatch".into(),
        ));
    }
    if !(rho > 0.0) {
        return Err(ProjectionError::NonpositiveRho);
    }
    if !u.iter().any(|&v| v > a) {
        return Err(ProjectionError::SingularJacobian);
    }

    let mut trace = NewtonTrace::default();
    let mut counts = IterationCounts::default();
    let mut grad = vec![0.0; m];
    let mut f_u = vec![0.0; m];
    let mut trial = vec![0.0; m];

    // Line-search merit || (F_u, L(u) - m lambda) ||_2, or None when a trial
    // point overflows the loss. The feasibility row enters in unscaled units:
    // dividing it by m (as in the Newton system, where row scaling is
    // irrelevant) would let the accumulated rounding noise of the m
    // stationarity rows swamp the scalar feasibility signal at large m.
    let eval_fnorm = |u: &[f64], rho: f64| -> Result<Option<f64>, ProjectionError> {
        let mut sq = Vec::with_capacity(u.len() + 1);
        let mut loss_sum = 0.0;
        for (ui, xi) in u.iter().zip(inst.x()) {
            let (val, der) = match inst.loss().value_and_derivs(*ui) {
                Ok((v, d, _)) => (v, d),
                Err(LossError::Overflow { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            loss_sum += val;
            let r = ui - xi + rho / mf * der;
            sq.push(r * r);
        }
        let feas = loss_sum - mf * inst.lambda();
        sq.push(feas * feas);
        Ok(Some(pairwise_sum(&sq).sqrt()))
    };

    let mut etas = vec![0.0; m];
    for _ in 0..params.max_iter {
        // Assemble F and the generalized Jacobian pieces at (u, rho).
        let mut values = Vec::with_capacity(m);
        for i in 0..m {
            let (v, d, e) = inst.loss().value_and_derivs(u[i])?;
            grad[i] = d;
            etas[i] = e;
            values.push(v);
        }
        let mean_gap = pairwise_sum(&values) / mf - inst.lambda();
        for i in 0..m {
            f_u[i] = u[i] - inst.x()[i] + rho / mf * grad[i];
        }
        let stationarity = f_u.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
        let cert = stationarity
            .max(mean_gap.max(0.0))
            .max((rho * mean_gap).abs());
        let fnorm = {
            let mut sq: Vec<f64> = f_u.iter().map(|r| r * r).collect();
            sq.push(mf * mean_gap * (mf * mean_gap));
            pairwise_sum(&sq).sqrt()
        };
        if cert <= params.tol {
            trace.push(fnorm, 1.0, rho);
            let result = ProjectionResult {
                rho,
                kkt_residual: kkt_certificate(inst, &u, rho)?,
                u,
                iterations: counts,
                solver: SolverKind::DirSsn,
                hessian_surrogate: false,
            };
            return Ok((result, trace));
        }

        // Closed-form Newton direction through the diagonal block:
        //   minv = (I + (rho/m) D)^{-1}
        //   c    = -m * minv * F_u
        //   d2   = (m^2 * F_rho + grad^T c) / (grad^T minv grad)
        //   d1   = (c - d2 * minv * grad) / m
        let mut minv = Vec::with_capacity(m);
        for i in 0..m {
            minv.push(1.0 / (1.0 + rho / mf * etas[i]));
        }
        let c: Vec<f64> = (0..m).map(|i| -mf * minv[i] * f_u[i]).collect();
        let mg: Vec<f64> = (0..m).map(|i| minv[i] * grad[i]).collect();
        let denom = pairwise_dot(&grad, &mg);
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(ProjectionError::SingularJacobian);
        }
        let d2 = (mf * mf * mean_gap + pairwise_dot(&grad, &c)) / denom;
        let d1: Vec<f64> = (0..m).map(|i| (c[i] - d2 * mg[i]) / mf).collect();

        // Phase 1: keep at least one coordinate above the flat threshold.
        let mut alpha = 1.0;
        let mut backtracks = 0;
        loop {
            let max_u = u
                .iter()
                .zip(&d1)
                .map(|(ui, di)| ui + alpha * di)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_u > a {
                break;
            }
            alpha *= params.beta;
            backtracks += 1;
            if backtracks > params.max_backtracks {
                return Err(ProjectionError::LineSearchStall {
                    solver: SolverKind::DirSsn,
                    backtracks,
                });
            }
        }
        // Phase 2: Armijo decrease on ||F||; overflowing or rho-invalid trial
        // points just shrink the step.
        loop {
            for i in 0..m {
                trial[i] = u[i] + alpha * d1[i];
            }
            let trial_rho = rho + alpha * d2;
            if trial_rho > 0.0 {
                if let Some(norm) = eval_fnorm(&trial, trial_rho)? {
                    if norm <= (1.0 - params.sigma * alpha) * fnorm {
                        break;
                    }
                }
            }
            alpha *= params.beta;
            backtracks += 1;
            if backtracks > params.max_backtracks {
                // No representable decrease of the merit remains. If the
                // iterate already certifies at the documented scale, that is
                // convergence at the f64 noise floor, not a failure.
                if cert <= params.stall_cert_cap {
                    trace.push(fnorm, 0.0, rho);
                    let result = ProjectionResult {
                        rho,
                        kkt_residual: kkt_certificate(inst, &u, rho)?,
                        u,
                        iterations: counts,
                        solver: SolverKind::DirSsn,
                        hessian_surrogate: false,
                    };
                    return Ok((result, trace));
                }
                return Err(ProjectionError::LineSearchStall {
                    solver: SolverKind::DirSsn,
                    backtracks,
                });
            }
        }
        std::mem::swap(&mut u, &mut trial);
        rho += alpha * d2;
        counts.outer += 1;
        counts.backtracks += backtracks;
        trace.push(fnorm, alpha, rho);
    }

    let residual = trace.records.last().map(|r| r.residual).unwrap_or(f64::NAN);
    Err(ProjectionError::MaxIterations {
        solver: SolverKind::DirSsn,
        iterations: counts.outer,
        residual,
        trace,
    })
}
