//! Projection onto the shortfall-feasibility set
//! `Z = { z in R^m : (1/m) sum_i l(z_i) <= lambda }`.
//!
//! Four interchangeable solvers compute `u* = argmin ||u - x||` over `Z`:
//!
//! * [`project_dirssn`] — semismooth Newton directly on the reduced KKT
//!   system in `(u, rho)`, with an O(m) closed-form Newton direction and a
//!   two-phase Armijo line search;
//! * [`project_sepssn`] — a one-dimensional G-semismooth Newton method on the
//!   multiplier function `H(rho) = sum l(u_i(rho)) - m*lambda`, where
//!   `u(rho)` solves the separable system `G(u, rho) = 0` coordinate-wise;
//! * [`project_bisection`] — doubling plus bisection on the same `H`;
//! * [`project_ipm`] — a primal-dual interior-point method with diagonal
//!   block elimination.
//!
//! The KKT conditions tie them together: `u_i - x_i + (rho/m) l'(u_i) = 0`,
//! `rho >= 0`, `(1/m) sum l(u_i) <= lambda`, and complementary slackness.
//! Every solver reports the max-norm certificate over those three residuals.

mod bisection;
mod dirssn;
mod ipm;
mod sepssn;

pub use bisection::{project_bisection, BisectionParams};
pub use dirssn::{project_dirssn, DirSsnParams};
pub use ipm::{project_ipm, IpmParams};
pub use sepssn::{
    h_value_and_element, project_sepssn, solve_g_subproblem, GSolution, SepSsnParams,
};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::try_pairwise_map_sum;
use crate::loss::{LossError, LossFunction};

/// Margin below which a point still counts as inside `Z`, so boundary points
/// short-circuit with `rho = 0`.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid projection instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations {
        solver: SolverKind,
        iterations: usize,
        residual: f64,
        trace: NewtonTrace,
    },
    #[error("{solver} line search stalled after {backtracks} backtracks")]
    LineSearchStall {
        solver: SolverKind,
        backtracks: usize,
    },
    #[error("generalized Jacobian is singular: the loss gradient vanished")]
    SingularJacobian,
    #[error("all loss derivatives vanished; the point is effectively inside the set")]
    DegenerateDerivative,
    #[error("multiplier iterate left (0, inf)")]
    NonpositiveRho,
    #[error("no strictly feasible interior starting point could be constructed")]
    InfeasibleStart,
    #[error("inner Newton failed on coordinate {coord} (residual {residual:.3e})")]
    InnerMaxIterations { coord: usize, residual: f64 },
}

/// A point to project, the risk level, and the loss defining the set.
#[derive(Debug, Clone)]
pub struct ProjectionInstance {
    x: Vec<f64>,
    lambda: f64,
    loss: LossFunction,
}

impl ProjectionInstance {
    pub fn new(x: Vec<f64>, lambda: f64, loss: LossFunction) -> Result<Self, ProjectionError> {
        if x.is_empty() {
            return Err(ProjectionError::InvalidInstance(
                "x must be nonempty".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ProjectionError::InvalidInstance("x must be finite".into()));
        }
        if !(lambda > loss.inf_value()) {
            return Err(ProjectionError::InvalidInstance(format!(
                "risk level {lambda} must exceed inf l = {}",
                loss.inf_value()
            )));
        }
        Ok(ProjectionInstance { x, lambda, loss })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn loss(&self) -> &LossFunction {
        &self.loss
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `(1/m) sum l(v_i)` for a candidate point.
    pub fn mean_loss(&self, v: &[f64]) -> Result<f64, LossError> {
        Ok(try_pairwise_map_sum(v, &|z| self.loss.value(z))? / v.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Membership {
    Inside,
    Outside,
}

/// Whether `x` lies in `Z`, with the margin `lambda - (1/m) sum l(x_i)`.
pub fn membership(inst: &ProjectionInstance) -> Result<(Membership, f64), ProjectionError> {
    let margin = inst.lambda - inst.mean_loss(&inst.x)?;
    let side = if margin >= -BOUNDARY_TOL {
        Membership::Inside
    } else {
        Membership::Outside
    };
    Ok((side, margin))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SolverKind {
    DirSsn,
    SepSsn,
    Bisection,
    Ipm,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverKind::DirSsn => "dirssn",
            SolverKind::SepSsn => "sepssn",
            SolverKind::Bisection => "bisect",
            SolverKind::Ipm => "ipm",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IterationCounts {
    /// Outer Newton / bisection steps.
    pub outer: usize,
    /// Total inner (per-coordinate) Newton steps.
    pub inner: usize,
    /// Line-search backtracks or safeguard bisections.
    pub backtracks: usize,
}

/// One per-iteration record of an outer solve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRecord {
    /// Residual driving the solver: `||F||` or `|H|` depending on the method.
    pub residual: f64,
    /// Accepted step size (1.0 for full steps, 0.0 for safeguard bisections).
    pub step: f64,
    /// Multiplier value at the iterate.
    pub rho: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NewtonTrace {
    pub records: Vec<TraceRecord>,
}

impl NewtonTrace {
    pub(crate) fn push(&mut self, residual: f64, step: f64, rho: f64) {
        self.records.push(TraceRecord {
            residual,
            step,
            rho,
        });
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResult {
    /// The projection `u*`.
    pub u: Vec<f64>,
    /// KKT multiplier `rho*` (zero when `x` was already in the set).
    pub rho: f64,
    /// Max-norm KKT certificate; see [`kkt_certificate`].
    pub kkt_residual: f64,
    pub iterations: IterationCounts,
    pub solver: SolverKind,
    /// True when a subdifferential element stood in for a missing second
    /// derivative (interior-point method with the `eta = 2` polynomial loss).
    pub hessian_surrogate: bool,
}

/// Max over the three KKT residuals of the projection problem:
/// stationarity `max_i |u_i - x_i + (rho/m) l'(u_i)|`, feasibility
/// `max(0, mean_loss - lambda)`, and complementarity
/// `|rho * (mean_loss - lambda)|`.
pub fn kkt_certificate(
    inst: &ProjectionInstance,
    u: &[f64],
    rho: f64,
) -> Result<f64, ProjectionError> {
    let m = inst.dim() as f64;
    let mut stationarity = 0.0f64;
    for (ui, xi) in u.iter().zip(inst.x()) {
        let r = ui - xi + rho / m * inst.loss.deriv(*ui)?;
        stationarity = stationarity.max(r.abs());
    }
    let gap = inst.mean_loss(u)? - inst.lambda;
    Ok(stationarity.max(gap.max(0.0)).max((rho * gap).abs()))
}

/// Projects `x` onto `Z` with the chosen solver and its default parameters.
/// Points already in the set short-circuit to `u = x`, `rho = 0`.
pub fn project(
    inst: &ProjectionInstance,
    solver: SolverKind,
) -> Result<(ProjectionResult, NewtonTrace), ProjectionError> {
    let (side, _) = membership(inst)?;
    if side == Membership::Inside {
        let result = ProjectionResult {
            u: inst.x().to_vec(),
            rho: 0.0,
            kkt_residual: kkt_certificate(inst, inst.x(), 0.0)?,
            iterations: IterationCounts::default(),
            solver,
            hessian_surrogate: false,
        };
        return Ok((result, NewtonTrace::default()));
    }
    match solver {
        SolverKind::DirSsn => project_dirssn(inst, None, &DirSsnParams::default()),
        SolverKind::SepSsn => project_sepssn(inst, &SepSsnParams::default()),
        SolverKind::Bisection => project_bisection(inst, &BisectionParams::default())
            .map(|r| (r, NewtonTrace::default())),
        SolverKind::Ipm => project_ipm(inst, &IpmParams::default()),
    }
}
