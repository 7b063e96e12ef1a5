//! Utility maximization under a shortfall-risk cap.
//!
//! Maximizes `sum_i u(xi_i'w)` over the simplex subject to the position's
//! shortfall risk staying below a cap `b`, i.e.
//! `(1/m) sum_i l(-xi_i'w - b) <= lambda`. With `z = -Rw - b1` the z-update
//! is the same projection onto `Z` as in the main problem, while the
//! w-update minimizes the smooth `-U(Rw)` plus the quadratic penalty by
//! accelerated projected gradient.

use std::time::Instant;

use serde::Serialize;

use crate::linalg::{pairwise_dot, pairwise_sum, try_pairwise_map_sum, Matrix};
use crate::loss::LossFunction;

use super::simplex::project_simplex;
use super::subproblem::gram_norm_r;
use super::{adapt_sigma, AdmmError, AdmmOptions, SolveReport, ZProjector};

/// Concave nondecreasing utilities for the objective `sum u(xi'w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Utility {
    /// `u(x) = x`.
    Linear,
    /// CARA: `u(x) = (1 - exp(-beta x)) / beta`.
    Exponential { beta: f64 },
}

impl Utility {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Utility::Linear => x,
            Utility::Exponential { beta } => (1.0 - (-beta * x).exp()) / beta,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Utility::Linear => 1.0,
            Utility::Exponential { beta } => (-beta * x).exp(),
        }
    }

    /// Upper bound on `|u''|` over `[lo, hi]`.
    fn curvature_bound(&self, lo: f64, _hi: f64) -> f64 {
        match self {
            Utility::Linear => 0.0,
            Utility::Exponential { beta } => beta * (-beta * lo).exp(),
        }
    }
}

/// The capped-risk utility problem.
#[derive(Debug, Clone)]
pub struct UtilityProblem {
    pub returns: Matrix,
    /// Shortfall-risk cap on the position.
    pub b: f64,
    pub lambda: f64,
    pub loss: LossFunction,
    pub utility: Utility,
}

impl UtilityProblem {
    fn validate(&self) -> Result<(), AdmmError> {
        if self.returns.rows() == 0 || self.returns.cols() == 0 || !self.returns.all_finite() {
            return Err(AdmmError::InvalidProblem(
                "return matrix must be nonempty and finite".into(),
            ));
        }
        if !(self.lambda > self.loss.inf_value()) {
            return Err(AdmmError::InvalidProblem(format!(
                "risk level {} must exceed inf l",
                self.lambda
            )));
        }
        if !self.b.is_finite() {
            return Err(AdmmError::InvalidProblem(
                "risk cap b must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UtilitySolution {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub nu: Vec<f64>,
}

/// ADMM for the capped-risk problem; same penalty adaptation and stopping
/// structure as the main solver.
pub fn solve_utility_constrained(
    problem: &UtilityProblem,
    opts: &AdmmOptions,
) -> Result<(SolveReport, UtilitySolution), AdmmError> {
    problem.validate()?;
    let start = Instant::now();
    let r = &problem.returns;
    let m = r.rows();
    let n = r.cols();
    let mf = m as f64;
    let b = problem.b;

    let mut warnings = Vec::new();
    // Cheap feasibility probe at the equal-weight point and the vertices.
    let mut any_feasible = false;
    let ew = vec![1.0 / n as f64; n];
    let mut probes: Vec<Vec<f64>> = vec![ew.clone()];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        probes.push(e);
    }
    for p in &probes {
        let pos = r.matvec(p);
        let mean = try_pairwise_map_sum(&pos, &|v| problem.loss.value(-v - b))? / mf;
        if mean < problem.lambda {
            any_feasible = true;
            break;
        }
    }
    if !any_feasible {
        warnings.push(
            "no probed portfolio satisfies the risk cap strictly; the problem may be infeasible"
                .to_string(),
        );
    }

    // Gradient Lipschitz bound: portfolio returns are convex combinations of
    // row entries, so the utility curvature is bounded on the entry range.
    let gram = gram_norm_r(r);
    let lo = r.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let curvature = problem.utility.curvature_bound(lo, hi);

    let mut w = ew;
    let mut rw = r.matvec(&w);
    let mut z: Vec<f64> = rw.iter().map(|v| -v - b).collect();
    let mut nu = vec![0.0; m];
    let mut sigma = opts.sigma0;
    let mut projector = ZProjector::default();
    projector.params.tol = opts.proj_tol;
    projector.params.inner_tol = opts.proj_inner_tol;

    let mut converged = false;
    let mut iterations = 0usize;
    let mut wt_inexact = 0usize;
    let mut wt_iterations = 0usize;
    let (mut r_pri, mut r_dual) = (f64::NAN, f64::NAN);

    for k in 0..opts.max_iter {
        iterations = k + 1;

        // w-update by accelerated projected gradient.
        let lip = (gram * (sigma + curvature) * 1.1).max(1e-30);
        let step = 1.0 / lip;
        let grad_at = |rwv: &[f64]| -> Vec<f64> {
            let inner: Vec<f64> = rwv
                .iter()
                .zip(&z)
                .zip(&nu)
                .map(|((rwi, zi), nui)| -problem.utility.deriv(*rwi) + nui + sigma * (rwi + zi + b))
                .collect();
            r.matvec_t(&inner)
        };
        let mut xw = w.clone();
        let mut yw = w.clone();
        let mut theta: f64 = 1.0;
        let mut hit_cap = true;
        for _ in 0..opts.wt_max_iter {
            wt_iterations += 1;
            let ry = r.matvec(&yw);
            let g = grad_at(&ry);
            let shifted: Vec<f64> = yw.iter().zip(&g).map(|(y, gi)| y - step * gi).collect();
            let cand = project_simplex(&shifted);
            let mut sq: Vec<f64> = yw
                .iter()
                .zip(&cand)
                .map(|(a, bb)| (a - bb) * (a - bb))
                .collect();
            sq.push(0.0);
            let pg = lip * pairwise_sum(&sq).sqrt();
            if pg <= opts.wt_tol || cand == xw {
                xw = cand;
                hit_cap = false;
                break;
            }
            let momentum: Vec<f64> = cand.iter().zip(&xw).map(|(c, x)| c - x).collect();
            let advance = pairwise_dot(&g, &momentum);
            if advance > 0.0 {
                theta = 1.0;
                yw = cand.clone();
            } else {
                let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let beta = (theta - 1.0) / theta_next;
                yw = cand
                    .iter()
                    .zip(&momentum)
                    .map(|(c, d)| c + beta * d)
                    .collect();
                theta = theta_next;
            }
            xw = cand;
        }
        if hit_cap {
            wt_inexact += 1;
        }
        w = xw;
        rw = r.matvec(&w);

        // z-update: projection of -nu/sigma - Rw - b1.
        let c1: Vec<f64> = rw
            .iter()
            .zip(&nu)
            .map(|(rwi, nui)| -nui / sigma - rwi - b)
            .collect();
        let z_old = std::mem::take(&mut z);
        let (z_new, _) = projector.project(c1, problem.lambda, &problem.loss)?;
        z = z_new;

        let r1: Vec<f64> = rw.iter().zip(&z).map(|(rwi, zi)| rwi + zi + b).collect();
        r_pri = pairwise_dot(&r1, &r1).sqrt();
        let dz: Vec<f64> = z.iter().zip(&z_old).map(|(a, bb)| a - bb).collect();
        let rt_dz = r.matvec_t(&dz);
        r_dual = sigma * pairwise_dot(&rt_dz, &rt_dz).sqrt();

        for (nui, ri) in nu.iter_mut().zip(&r1) {
            *nui += sigma * ri;
        }

        let rw_norm = pairwise_dot(&rw, &rw).sqrt();
        let z_norm = pairwise_dot(&z, &z).sqrt();
        let b_norm = b.abs() * mf.sqrt();
        let eps_pri = mf.sqrt() * opts.tol_abs + opts.tol_rel * rw_norm.max(z_norm).max(b_norm);
        let rt_nu = r.matvec_t(&nu);
        let eps_dual =
            (n as f64).sqrt() * opts.tol_abs + opts.tol_rel * pairwise_dot(&rt_nu, &rt_nu).sqrt();
        if r_pri <= eps_pri && r_dual <= eps_dual {
            converged = true;
            break;
        }
        sigma = adapt_sigma(sigma, opts.tau, r_pri, r_dual, opts.balance_ratio);
    }

    let objective = -try_pairwise_map_sum(&rw, &|v| {
        Ok::<f64, crate::loss::LossError>(problem.utility.value(v))
    })?;
    let neg_weight = w.iter().fold(0.0f64, |acc, &x| acc.max(-x));
    let budget = (pairwise_sum(&w) - 1.0).abs();
    let mean_loss = try_pairwise_map_sum(&rw, &|v| problem.loss.value(-v - b))? / mf;
    let violation = neg_weight
        .max(budget)
        .max((mean_loss - problem.lambda).max(0.0));

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
        warnings,
    };
    Ok((report, UtilitySolution { w, z, nu }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_values_and_derivs() {
        let lin = Utility::Linear;
        assert_eq!(lin.value(0.7), 0.7);
        assert_eq!(lin.deriv(-3.0), 1.0);
        let cara = Utility::Exponential { beta: 2.0 };
        assert!((cara.value(0.0)).abs() < 1e-15);
        assert!((cara.deriv(0.0) - 1.0).abs() < 1e-15);
        // Concavity: derivative decreasing.
        assert!(cara.deriv(1.0) < cara.deriv(0.0));
    }

    #[test]
    fn zero_returns_degenerate_objective() {
        // R = 0 and a loose cap: any simplex point is optimal; the solver
        // must return a feasible one with tiny violation.
        let problem = UtilityProblem {
            returns: Matrix::zeros(3, 2),
            b: 2.0,
            lambda: 0.5,
            loss: LossFunction::piecewise_polynomial(2.0).unwrap(),
            utility: Utility::Linear,
        };
        let opts = AdmmOptions {
            sigma0: 1e-2,
            tau: 2.0,
            ..Default::default()
        };
        let (report, sol) = solve_utility_constrained(&problem, &opts).unwrap();
        assert!(report.converged);
        assert!(report.violation <= 1e-5, "violation={}", report.violation);
        let sum: f64 = sol.w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_asset_forced_weights() {
        let problem = UtilityProblem {
            returns: Matrix::from_vec(4, 1, vec![0.1, -0.05, 0.2, 0.0]),
            b: 1.0,
            lambda: 0.5,
            loss: LossFunction::exponential(1.0).unwrap(),
            utility: Utility::Exponential { beta: 1.0 },
        };
        let opts = AdmmOptions {
            sigma0: 1e-2,
            tau: 2.0,
            ..Default::default()
        };
        let (report, sol) = solve_utility_constrained(&problem, &opts).unwrap();
        assert_eq!(sol.w, vec![1.0]);
        assert!(report.converged);
        assert!(report.violation <= 1e-5);
        // Constraint residual z + Rw + b1 at exit.
        let rw = problem.returns.matvec(&sol.w);
        let resid: f64 = rw
            .iter()
            .zip(&sol.z)
            .map(|(r, z)| (r + z + problem.b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid <= 1e-6, "resid={resid}");
    }
}
