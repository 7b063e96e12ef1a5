//! One-dimensional G-semismooth Newton method on the multiplier equation.
//!
//! For fixed `rho > 0` the stationarity system
//! `G(u, rho) = u - x + (rho/m) * grad L(u) = 0` is separable: each
//! coordinate is a strictly increasing scalar equation with a unique root,
//! solved here by Newton with a bracket safeguard. The implicit solution
//! `u(rho)` turns the remaining feasibility equation into the scalar
//! G-semismooth function `H(rho) = sum_i l(u_i(rho)) - m*lambda`, which is
//! nonincreasing, and whose generalized derivative elements are
//! `h = -sum_i l'(u_i)^2 / (m + rho * eta_i)` with `eta_i` a subdifferential
//! element of `l'`. The outer loop is Newton on `H` with a sign-change
//! bracket as safeguard, so it converges for any `rho0 > 0`.

use crate::linalg::try_pairwise_map_sum;
use crate::loss::LossFunction;

use super::{
    kkt_certificate, IterationCounts, NewtonTrace, ProjectionError, ProjectionInstance,
    ProjectionResult, SolverKind,
};

#[derive(Debug, Clone, Copy)]
pub struct SepSsnParams {
    /// Initial multiplier; insensitive in practice, fixed default 1.
    pub rho0: f64,
    /// Outer tolerance on `|H| / m`; the loop additionally requires the
    /// complementarity residual `rho |H| / m` to sit below `10 * tol`, so
    /// certificates stay tight even when `rho*` is large.
    pub tol: f64,
    pub max_outer: usize,
    /// Per-coordinate residual tolerance of the inner Newton solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SepSsnParams {
    fn default() -> Self {
        SepSsnParams {
            rho0: 1.0,
            tol: 1e-10,
            max_outer: 100,
            inner_tol: 1e-14,
            inner_max_iter: 100,
        }
    }
}

/// Solution of the separable inner system `G(u, rho) = 0`.
#[derive(Debug, Clone)]
pub struct GSolution {
    pub u: Vec<f64>,
    /// Total scalar Newton steps across coordinates.
    pub newton_iters: usize,
    /// Safeguard bisections taken when a Newton step left its bracket.
    pub bisect_fallbacks: usize,
}

/// Solves `u_i - x_i + (rho/m) l'(u_i) = 0` for every coordinate, warm-started
/// from `u0`. Coordinates with `x_i` at or below the flat threshold are fixed
/// points and are returned untouched.
pub fn solve_g_subproblem(
    x: &[f64],
    rho: f64,
    loss: &LossFunction,
    u0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<GSolution, ProjectionError> {
    assert_eq!(x.len(), u0.len(), "warm start length mismatch");
    if !(rho > 0.0) {
        return Err(ProjectionError::NonpositiveRho);
    }
    let m = x.len() as f64;
    let scale = rho / m;
    let a = loss.flat_threshold();
    let mut u = vec![0.0; x.len()];
    let mut newton_iters = 0usize;
    let mut bisect_fallbacks = 0usize;

    for i in 0..x.len() {
        let xi = x[i];
        if xi <= a {
            // l'(x_i) = 0, so x_i solves its own equation exactly.
            u[i] = xi;
            continue;
        }
        // The root lies in (a, x_i]: g(x_i) >= 0, g(a) < 0 when a is finite,
        // and g is strictly increasing.
        let mut v = u0[i].min(xi);
        let mut lo = a; // g < 0 side; -inf for exponential losses
        let mut hi = xi; // g >= 0 side
        let mut prev = f64::NAN;
        let mut converged = false;
        // The residual granularity is one ulp of the dominant term, so the
        // tolerance must scale with the coordinate magnitude.
        let tol_i = tol * xi.abs().max(1.0);
        for _ in 0..max_iter {
            let (_, d1, d2) = loss.value_and_derivs(v)?;
            let gv = v - xi + scale * d1;
            if gv.abs() <= tol_i {
                converged = true;
                break;
            }
            if gv > 0.0 {
                hi = hi.min(v);
            } else {
                lo = lo.max(v);
            }
            let slope = 1.0 + scale * d2;
            let next = v - gv / slope;
            newton_iters += 1;
            if next == v || next == prev {
                // Fixed point or a two-cycle between adjacent floats: the
                // residual is as small as f64 evaluation allows.
                converged = true;
                break;
            }
            prev = v;
            if next.is_finite() && next > lo && next < hi {
                v = next;
            } else {
                bisect_fallbacks += 1;
                // Newton from the g > 0 side always descends, so a missing low
                // bracket (exponential losses) only admits unit-step descent.
                v = if lo.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    hi - 1.0
                };
            }
        }
        if !converged {
            let residual = loss
                .deriv(v)
                .map(|d| v - xi + scale * d)
                .unwrap_or(f64::NAN);
            return Err(ProjectionError::InnerMaxIterations { coord: i, residual });
        }
        u[i] = v;
    }
    Ok(GSolution {
        u,
        newton_iters,
        bisect_fallbacks,
    })
}

/// Evaluates `H(rho) = sum l(u_i) - m*lambda` and one generalized derivative
/// element `h = -sum l'(u_i)^2 / (m + rho * eta_i)` at a solved `u(rho)`.
pub fn h_value_and_element(
    rho: f64,
    lambda: f64,
    loss: &LossFunction,
    u: &[f64],
) -> Result<(f64, f64), ProjectionError> {
    let m = u.len() as f64;
    let h_val = try_pairwise_map_sum(u, &|v| loss.value(v))? - m * lambda;
    let h_deriv = -try_pairwise_map_sum(u, &|v| {
        let (_, d, eta) = loss.value_and_derivs(v)?;
        Ok::<f64, crate::loss::LossError>(d * d / (m + rho * eta))
    })?;
    if h_deriv == 0.0 {
        return Err(ProjectionError::DegenerateDerivative);
    }
    Ok((h_val, h_deriv))
}

/// Projects an outside point by Newton on `H(rho) = 0`.
///
/// A sign-change bracket is maintained alongside the Newton iterates; steps
/// that leave `(0, inf)` or the bracket fall back to doubling (no upper
/// bracket yet) or bisection, which makes the method convergent regardless of
/// the convexity of `H`.
pub fn project_sepssn(
    inst: &ProjectionInstance,
    params: &SepSsnParams,
) -> Result<(ProjectionResult, NewtonTrace), ProjectionError> {
    if !(params.rho0 > 0.0) {
        return Err(ProjectionError::NonpositiveRho);
    }
    let m = inst.dim() as f64;
    let mut rho = params.rho0;
    let mut warm = inst.x().to_vec();
    let mut trace = NewtonTrace::default();
    let mut counts = IterationCounts::default();
    // Bracket: H(rho_lo) > 0 > H(rho_hi).
    let mut rho_lo = 0.0f64;
    let mut rho_hi = f64::INFINITY;

    for _ in 0..params.max_outer {
        let sol = solve_g_subproblem(
            inst.x(),
            rho,
            inst.loss(),
            &warm,
            params.inner_tol,
            params.inner_max_iter,
        )?;
        counts.inner += sol.newton_iters;
        counts.backtracks += sol.bisect_fallbacks;
        warm = sol.u;
        let (h_val, h_deriv) = h_value_and_element(rho, inst.lambda(), inst.loss(), &warm)?;
        if h_val > 0.0 {
            rho_lo = rho_lo.max(rho);
        } else {
            rho_hi = rho_hi.min(rho);
        }
        let newton = rho - h_val / h_deriv;
        let within_tol = h_val.abs() <= params.tol * m;
        let certified = within_tol && rho * h_val.abs() <= 10.0 * params.tol * m;
        // Two machine floors: the sign-change bracket collapsed to the f64
        // resolution of rho, or the Newton correction itself is below it. In
        // either case the complementarity guard may be unattainable (it sits
        // below the evaluation noise when rho* is huge) and the iterate is
        // final.
        let bracket_floor = rho_hi.is_finite() && rho_hi - rho_lo <= 4.0 * f64::EPSILON * rho_hi;
        let newton_floor = newton == rho;
        if certified || (within_tol && (bracket_floor || newton_floor)) {
            trace.push(h_val.abs(), 1.0, rho);
            let result = ProjectionResult {
                rho,
                kkt_residual: kkt_certificate(inst, &warm, rho)?,
                u: warm,
                iterations: counts,
                solver: SolverKind::SepSsn,
                hessian_surrogate: false,
            };
            return Ok((result, trace));
        }
        let (next, step) = if newton.is_finite() && newton > rho_lo && newton < rho_hi {
            (newton, 1.0)
        } else if rho_hi.is_finite() {
            counts.backtracks += 1;
            (0.5 * (rho_lo + rho_hi), 0.0)
        } else {
            // Still need an upper bracket: grow geometrically, as in the
            // bisection method's doubling phase.
            counts.backtracks += 1;
            (2.0 * rho.max(1.0), 0.0)
        };
        trace.push(h_val.abs(), step, rho);
        rho = next;
        counts.outer += 1;
    }
    let residual = trace.records.last().map(|r| r.residual).unwrap_or(f64::NAN);
    Err(ProjectionError::MaxIterations {
        solver: SolverKind::SepSsn,
        iterations: counts.outer,
        residual,
        trace,
    })
}
