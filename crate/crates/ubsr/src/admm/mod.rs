//! ADMM for the mean-shortfall portfolio problem.
//!
//! The sample problem minimizes `(1-alpha) t - alpha mu'w` over simplex
//! weights subject to a return floor `mu'w >= R0` and the shortfall
//! constraint `(1/m) sum_i l(-xi_i'w - t) <= lambda`. Splitting
//! `z = -Rw - t1` and a slack `s >= 0` for the return floor yields blocks
//! the method alternates over:
//!
//! 1. `(w, t)` — a convex quadratic over simplex x R, solved by accelerated
//!    projected gradient ([`subproblem`]);
//! 2. `(z, s)` — a projection onto the shortfall set `Z` plus a scalar clamp;
//! 3. dual ascent on both multipliers.
//!
//! The penalty `sigma` is rebalanced whenever the primal/dual residual ratio
//! drifts past a threshold. Stopping follows the usual scaled absolute +
//! relative residual rule.

mod simplex;
mod subproblem;
mod utility;

pub use simplex::project_simplex;
pub use subproblem::WtSubproblem;
pub use utility::{solve_utility_constrained, Utility, UtilityProblem, UtilitySolution};

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::estimator::{estimate_ubsr, EstimatorError};
use crate::linalg::{pairwise_dot, pairwise_sum, try_pairwise_map_sum, Matrix};
use crate::loss::{LossError, LossFunction};
use crate::projection::{
    membership, project_sepssn, Membership, ProjectionError, ProjectionInstance, SepSsnParams,
};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Descriptor of the weight set; only the standard simplex ships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightSet {
    Simplex,
}

/// The sampled portfolio problem.
#[derive(Debug, Clone)]
pub struct SaaProblem {
    returns: Matrix,
    mu: Vec<f64>,
    lambda: f64,
    alpha: f64,
    r0: f64,
    loss: LossFunction,
    weight_set: WeightSet,
    warnings: Vec<String>,
}

impl SaaProblem {
    /// Builds a problem, recomputing the sample mean from the columns of
    /// `returns`. `r0 = None` applies the 1/n rule: the expected return of
    /// the equal-weight portfolio.
    pub fn new(
        returns: Matrix,
        lambda: f64,
        alpha: f64,
        r0: Option<f64>,
        loss: LossFunction,
    ) -> Result<Self, AdmmError> {
        if returns.rows() == 0 || returns.cols() == 0 {
            return Err(AdmmError::InvalidProblem(
                "return matrix must be nonempty".into(),
            ));
        }
        if !returns.all_finite() {
            return Err(AdmmError::InvalidProblem(
                "return matrix must be finite".into(),
            ));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(AdmmError::InvalidProblem(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        if !(lambda > loss.inf_value()) {
            return Err(AdmmError::InvalidProblem(format!(
                "risk level {lambda} must exceed inf l = {}",
                loss.inf_value()
            )));
        }
        let mu = returns.col_means();
        let n = returns.cols();
        let equal_weight_return = pairwise_sum(&mu) / n as f64;
        let r0 = r0.unwrap_or(equal_weight_return);
        if !r0.is_finite() {
            return Err(AdmmError::InvalidProblem("R0 must be finite".into()));
        }

        let mut warnings = Vec::new();
        if equal_weight_return < r0 {
            warnings.push(format!(
                "equal-weight expected return {equal_weight_return} is below R0 = {r0}; \
                 feasibility is not guaranteed"
            ));
        }
        // Slater check on the equal-weight portfolio: some t must make the
        // shortfall constraint strictly feasible, which the estimator root
        // certifies.
        let ew = vec![1.0 / n as f64; n];
        let position = returns.matvec(&ew);
        estimate_ubsr(&position, lambda, &loss, 1e-9)
            .map_err(|e| AdmmError::InvalidProblem(format!("Slater check failed: {e}")))?;

        Ok(SaaProblem {
            returns,
            mu,
            lambda,
            alpha,
            r0,
            loss,
            weight_set: WeightSet::Simplex,
            warnings,
        })
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn loss(&self) -> &LossFunction {
        &self.loss
    }

    pub fn weight_set(&self) -> WeightSet {
        self.weight_set
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn num_samples(&self) -> usize {
        self.returns.rows()
    }

    pub fn num_assets(&self) -> usize {
        self.returns.cols()
    }
}

/// Solver options. Defaults follow the synthetic-data parameterization
/// (`sigma0 = 1e-6`, `tau = 1.7`); real-data runs typically use `1e-5` and
/// `2.7`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdmmOptions {
    pub sigma0: f64,
    /// Penalty rescale factor applied when residuals unbalance.
    pub tau: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Prox-gradient tolerance of the (w, t) inner solve.
    pub wt_tol: f64,
    pub wt_max_iter: usize,
    /// Outer tolerance handed to the z-projection.
    pub proj_tol: f64,
    pub proj_inner_tol: f64,
    /// Primal/dual ratio beyond which sigma is rescaled.
    pub balance_ratio: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            sigma0: 1e-6,
            tau: 1.7,
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            max_iter: 1000,
            wt_tol: 1e-8,
            wt_max_iter: 500,
            proj_tol: 1e-10,
            proj_inner_tol: 1e-14,
            balance_ratio: 10.0,
        }
    }
}

/// Full iterate state, returned alongside the report.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub w: Vec<f64>,
    pub t: f64,
    pub z: Vec<f64>,
    pub s: f64,
    pub nu1: Vec<f64>,
    pub nu2: f64,
    pub sigma: f64,
    /// `(primal, dual)` residual norms per iteration.
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// `(1 - alpha) t - alpha mu'w` at the final iterate.
    pub objective: f64,
    /// Constraint violation recomputed from scratch; see
    /// [`constraint_violation`].
    pub violation: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Outer iterations whose (w, t) solve hit its iteration cap.
    pub wt_inexact: usize,
    /// Total accelerated-gradient iterations across all (w, t) solves.
    pub wt_iterations: usize,
    pub warnings: Vec<String>,
}

/// Max of the four constraint violations: negative weights, simplex budget,
/// return floor, and shortfall level.
pub fn constraint_violation(problem: &SaaProblem, w: &[f64], t: f64) -> Result<f64, LossError> {
    let neg_weight = w.iter().fold(0.0f64, |acc, &x| acc.max(-x));
    let budget = (pairwise_sum(w) - 1.0).abs();
    let floor = (problem.r0() - pairwise_dot(problem.mu(), w)).max(0.0);
    let position = problem.returns().matvec(w);
    let mean_loss = try_pairwise_map_sum(&position, &|p| problem.loss().value(-p - t))?
        / problem.num_samples() as f64;
    let shortfall = (mean_loss - problem.lambda()).max(0.0);
    Ok(neg_weight.max(budget).max(floor).max(shortfall))
}

/// Dual ascent on both multipliers given the primal residuals.
pub fn dual_ascent(nu1: &mut [f64], nu2: &mut f64, sigma: f64, r1: &[f64], r2: f64) {
    for (nu, r) in nu1.iter_mut().zip(r1) {
        *nu += sigma * r;
    }
    *nu2 += sigma * r2;
}

/// Residual balancing: grow `sigma` when the primal residual dominates by
/// more than `ratio`, shrink when the dual does. Multipliers are kept.
pub fn adapt_sigma(sigma: f64, tau: f64, primal: f64, dual: f64, ratio: f64) -> f64 {
    if dual > 0.0 && primal / dual > ratio {
        sigma * tau
    } else if primal > 0.0 && dual / primal > ratio {
        sigma / tau
    } else {
        sigma
    }
}

/// Projector handle for the z-update: points inside `Z` pass through, and the
/// converged multiplier warm-starts the next call.
#[derive(Debug, Clone)]
pub struct ZProjector {
    pub params: SepSsnParams,
    warm_rho: Option<f64>,
}

impl Default for ZProjector {
    fn default() -> Self {
        ZProjector {
            params: SepSsnParams::default(),
            warm_rho: None,
        }
    }
}

impl ZProjector {
    pub fn project(
        &mut self,
        c: Vec<f64>,
        lambda: f64,
        loss: &LossFunction,
    ) -> Result<(Vec<f64>, f64), ProjectionError> {
        let inst = ProjectionInstance::new(c, lambda, *loss)?;
        let (side, _) = membership(&inst)?;
        if side == Membership::Inside {
            return Ok((inst.x().to_vec(), 0.0));
        }
        let mut params = self.params;
        if let Some(rho) = self.warm_rho {
            if rho > 0.0 {
                params.rho0 = rho;
            }
        }
        let (result, _) = project_sepssn(&inst, &params)?;
        self.warm_rho = Some(result.rho);
        Ok((result.u, result.rho))
    }
}

/// The (z, s) block update: `z = P_Z(-nu1/sigma - Rw - t1)` and a clamp for
/// the return-floor slack.
pub fn update_z_s(
    problem: &SaaProblem,
    w_new: &[f64],
    t_new: f64,
    nu1: &[f64],
    nu2: f64,
    sigma: f64,
    projector: &mut ZProjector,
) -> Result<(Vec<f64>, f64), AdmmError> {
    let rw = problem.returns().matvec(w_new);
    let c1: Vec<f64> = rw
        .iter()
        .zip(nu1)
        .map(|(rwi, nui)| -nui / sigma - rwi - t_new)
        .collect();
    let (z, _) = projector.project(c1, problem.lambda(), problem.loss())?;
    let s = (pairwise_dot(problem.mu(), w_new) - problem.r0() + nu2 / sigma).max(0.0);
    Ok((z, s))
}

/// Runs ADMM to the scaled residual tolerances. Hitting the iteration cap is
/// reported as `converged = false`, not an error.
pub fn solve(
    problem: &SaaProblem,
    opts: &AdmmOptions,
) -> Result<(SolveReport, AdmmState), AdmmError> {
    let start = Instant::now();
    let m = problem.num_samples();
    let n = problem.num_assets();
    let r = problem.returns();
    let mu = problem.mu();
    let mf = m as f64;

    let mut w = vec![1.0 / n as f64; n];
    let mut t = 0.0f64;
    let mut s = 0.0f64;
    let rw0 = r.matvec(&w);
    let mut z: Vec<f64> = rw0.iter().map(|v| -v - t).collect();
    let mut nu1 = vec![0.0; m];
    let mut nu2 = 0.0f64;
    let mut sigma = opts.sigma0;

    let gram = subproblem::gram_norm(r, mu);
    let mut projector = ZProjector {
        params: SepSsnParams {
            tol: opts.proj_tol,
            inner_tol: opts.proj_inner_tol,
            ..SepSsnParams::default()
        },
        warm_rho: None,
    };

    let mut residuals: Vec<(f64, f64)> = Vec::new();
    let mut converged = false;
    let mut wt_inexact = 0usize;
    let mut wt_iterations = 0usize;
    let mut iterations = 0usize;
    let (mut r_pri, mut r_dual) = (f64::NAN, f64::NAN);

    for k in 0..opts.max_iter {
        iterations = k + 1;

        // (5a) the (w, t) block.
        let sub = WtSubproblem {
            problem,
            z: &z,
            s,
            nu1: &nu1,
            nu2,
            sigma,
        };
        let lip = (sigma * gram * 1.1).max(sigma * mf);
        let sol = subproblem::solve_wt(&sub, &w, t, lip, opts.wt_tol, opts.wt_max_iter);
        w = sol.w;
        t = sol.t;
        wt_iterations += sol.iters;
        if sol.hit_cap {
            wt_inexact += 1;
        }
        debug_assert!((pairwise_sum(&w) - 1.0).abs() < 1e-10);

        // (5b) the (z, s) block.
        let rw = r.matvec(&w);
        let c1: Vec<f64> = rw
            .iter()
            .zip(&nu1)
            .map(|(rwi, nui)| -nui / sigma - rwi - t)
            .collect();
        let z_old = std::mem::take(&mut z);
        let s_old = s;
        let (z_new, _rho) = projector.project(c1, problem.lambda(), problem.loss())?;
        z = z_new;
        #[cfg(debug_assertions)]
        {
            let ml = try_pairwise_map_sum(&z, &|v| problem.loss().value(v)).map(|t| t / mf);
            debug_assert!(ml.map(|v| v <= problem.lambda() + 1e-8).unwrap_or(false));
        }
        let mu_w = pairwise_dot(mu, &w);
        s = (mu_w - problem.r0() + nu2 / sigma).max(0.0);

        // Residuals in the standard scaled form.
        let r1: Vec<f64> = rw.iter().zip(&z).map(|(rwi, zi)| rwi + t + zi).collect();
        let r2 = mu_w - s - problem.r0();
        r_pri = {
            let mut sq = pairwise_dot(&r1, &r1);
            sq += r2 * r2;
            sq.sqrt()
        };
        let dz: Vec<f64> = z.iter().zip(&z_old).map(|(a, b)| a - b).collect();
        let ds = s - s_old;
        let rt_dz = r.matvec_t(&dz);
        r_dual = {
            let mut sq = pairwise_dot(&rt_dz, &rt_dz);
            let ones_dz = pairwise_sum(&dz);
            sq += ones_dz * ones_dz + ds * ds;
            sigma * sq.sqrt()
        };
        residuals.push((r_pri, r_dual));

        // (5c)-(5d) dual ascent.
        dual_ascent(&mut nu1, &mut nu2, sigma, &r1, r2);

        // Scaled stopping thresholds.
        let ax_norm = {
            let mut sq: Vec<f64> = rw.iter().map(|v| (v + t) * (v + t)).collect();
            sq.push(mu_w * mu_w);
            pairwise_sum(&sq).sqrt()
        };
        let bz_norm = (pairwise_dot(&z, &z) + s * s).sqrt();
        let c_norm = problem.r0().abs();
        let eps_pri =
            (mf + 1.0).sqrt() * opts.tol_abs + opts.tol_rel * ax_norm.max(bz_norm).max(c_norm);
        let at_nu = {
            let mut v = r.matvec_t(&nu1);
            for (vj, mj) in v.iter_mut().zip(mu) {
                *vj += mj * nu2;
            }
            let ones_nu = pairwise_sum(&nu1);
            (pairwise_dot(&v, &v) + ones_nu * ones_nu).sqrt()
        };
        let eps_dual = (n as f64 + 1.0).sqrt() * opts.tol_abs + opts.tol_rel * at_nu;
        if r_pri <= eps_pri && r_dual <= eps_dual {
            converged = true;
            break;
        }

        sigma = adapt_sigma(sigma, opts.tau, r_pri, r_dual, opts.balance_ratio);
    }

    let objective = (1.0 - problem.alpha()) * t - problem.alpha() * pairwise_dot(mu, &w);
    let violation = constraint_violation(problem, &w, t)?;
    let report = SolveReport {
        objective,
        violation,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        primal_residual: r_pri,
        dual_residual: r_dual,
        wt_inexact,
        wt_iterations,
        warnings: problem.warnings().to_vec(),
    };
    let state = AdmmState {
        w,
        t,
        z,
        s,
        nu1,
        nu2,
        sigma,
        residuals,
    };
    Ok((report, state))
}
