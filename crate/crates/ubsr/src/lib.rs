//! Utility-based shortfall risk (UBSR) toolkit.
//!
//! UBSR of a position `X` at risk level `lambda` is the smallest cash amount
//! `t` such that `E[l(-X - t)] <= lambda`, where `l` is a nondecreasing convex
//! loss function. This crate provides the full computational stack around that
//! risk measure under sample average approximation:
//!
//! * [`loss`] — the loss-function families (`exp(beta*x)` and `(x_+)^eta / eta`)
//!   with first and generalized second derivatives.
//! * [`estimator`] — scalar root finding for the UBSR of a sampled position.
//! * [`projection`] — four interchangeable solvers for the Euclidean projection
//!   onto `Z = { z : (1/m) sum l(z_i) <= lambda }`: a direct semismooth Newton
//!   method on the KKT system, a one-dimensional G-semismooth Newton method on
//!   the multiplier equation, bisection, and a primal-dual interior-point
//!   method.
//! * [`admm`] — an ADMM solver for the mean-shortfall portfolio problem over
//!   the simplex, plus the utility-maximization variant with a UBSR cap.
//! * [`data`] — seeded synthetic return generation and CSV ingestion with
//!   outlier/imputation cleaning.
//! * [`backtest`] — rolling-window out-of-sample evaluation with the usual
//!   summary metrics.

pub mod admm;
pub mod backtest;
pub mod data;
pub mod estimator;
pub mod linalg;
pub mod loss;
pub mod projection;

pub use estimator::{estimate_ubsr, UbsrEstimate};
pub use linalg::Matrix;
pub use loss::{LossFunction, LossKind};
pub use projection::{membership, project, Membership, ProjectionInstance, SolverKind};
