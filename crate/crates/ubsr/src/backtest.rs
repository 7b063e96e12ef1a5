//! Rolling-window out-of-sample evaluation.
//!
//! For each evaluation day, the previous `window` rows become the scenario
//! set, the portfolio problem is solved, and the weights are held for one
//! day. The realized daily series is summarized by mean return, population
//! volatility, Sharpe ratio (zero risk-free rate), and maximum drawdown of
//! the compounded wealth curve. An equal-weight benchmark over the same days
//! is reported alongside.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::admm::{self, AdmmError, AdmmOptions, SaaProblem};
use crate::data::ReturnsTable;
use crate::linalg::{mean_and_population_var, pairwise_dot, pairwise_sum};
use crate::loss::LossFunction;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("table has {rows} rows; need at least window + 1 = {need}")]
    TooFewRows { rows: usize, need: usize },
    #[error("window must be at least 2")]
    WindowTooSmall,
    #[error("{failed} of {total} solves failed to converge (above the 5% abort threshold)")]
    TooManyFailures { failed: usize, total: usize },
    #[error(transparent)]
    Admm(#[from] AdmmError),
}

/// How the return floor is chosen for each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum R0Rule {
    /// The window's own equal-weight expected return.
    OneOverN,
    Fixed(f64),
    /// Grand mean of the full table, fixed across windows.
    FullSampleMean,
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub window: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub loss: LossFunction,
    pub r0_rule: R0Rule,
    pub admm: AdmmOptions,
}

impl BacktestConfig {
    pub fn new(loss: LossFunction, lambda: f64, alpha: f64) -> Self {
        BacktestConfig {
            window: 250,
            alpha,
            lambda,
            loss,
            r0_rule: R0Rule::OneOverN,
            admm: AdmmOptions::default(),
        }
    }
}

/// Per-day solve diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DayDiagnostic {
    /// Row index of the held day.
    pub day: usize,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub daily_returns: Vec<f64>,
    pub mean_return: f64,
    pub volatility: f64,
    /// `mean / volatility`; `None` when the volatility is zero.
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
    /// Compounded return after each day: `prod(1 + r_i) - 1`.
    pub cumulative: Vec<f64>,
    pub diagnostics: Vec<DayDiagnostic>,
}

/// Strategy report plus the equal-weight benchmark on the same days.
#[derive(Debug, Clone, Serialize)]
pub struct BacktestRun {
    pub strategy: BacktestReport,
    pub equal_weight: BacktestReport,
}

/// Largest peak-to-trough decline of the wealth curve `prod(1 + r_i)`,
/// measured against a running maximum that starts at the initial wealth 1.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut wealth = 1.0f64;
    let mut peak = 1.0f64;
    let mut dd = 0.0f64;
    for &r in returns {
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        dd = dd.min(wealth / peak - 1.0);
    }
    dd
}

/// Summary metrics over a realized daily series.
pub fn report_from_returns(daily: Vec<f64>, diagnostics: Vec<DayDiagnostic>) -> BacktestReport {
    let (mean, var) = mean_and_population_var(&daily);
    let vol = var.sqrt();
    let sharpe = if vol > 0.0 { Some(mean / vol) } else { None };
    let mut cumulative = Vec::with_capacity(daily.len());
    let mut wealth = 1.0;
    for &r in &daily {
        wealth *= 1.0 + r;
        cumulative.push(wealth - 1.0);
    }
    BacktestReport {
        max_drawdown: max_drawdown(&daily),
        mean_return: mean,
        volatility: vol,
        sharpe,
        cumulative,
        daily_returns: daily,
        diagnostics,
    }
}

/// Runs the rolling backtest. Days whose solve does not converge are skipped
/// and flagged; more than 5% of failures aborts the run.
pub fn run_backtest(
    table: &ReturnsTable,
    cfg: &BacktestConfig,
) -> Result<BacktestRun, BacktestError> {
    if cfg.window < 2 {
        return Err(BacktestError::WindowTooSmall);
    }
    let rows = table.data.rows();
    let n = table.data.cols();
    if rows < cfg.window + 1 {
        return Err(BacktestError::TooFewRows {
            rows,
            need: cfg.window + 1,
        });
    }
    let grand_mean = pairwise_sum(table.data.data()) / (rows * n) as f64;

    let days: Vec<usize> = (cfg.window..rows).collect();
    let outcomes: Vec<Result<(Option<f64>, DayDiagnostic), AdmmError>> = days
        .par_iter()
        .map(|&d| {
            let scenarios = table.data.row_slice(d - cfg.window, d);
            let r0 = match cfg.r0_rule {
                R0Rule::OneOverN => None,
                R0Rule::Fixed(v) => Some(v),
                R0Rule::FullSampleMean => Some(grand_mean),
            };
            let problem = SaaProblem::new(scenarios, cfg.lambda, cfg.alpha, r0, cfg.loss)?;
            let (report, state) = admm::solve(&problem, &cfg.admm)?;
            let realized = if report.converged {
                Some(pairwise_dot(table.data.row(d), &state.w))
            } else {
                None
            };
            let diag = DayDiagnostic {
                day: d,
                converged: report.converged,
                iterations: report.iterations,
                objective: report.objective,
                violation: report.violation,
            };
            Ok((realized, diag))
        })
        .collect();

    let mut daily = Vec::with_capacity(days.len());
    let mut diagnostics = Vec::with_capacity(days.len());
    let mut failed = 0usize;
    for outcome in outcomes {
        let (realized, diag) = outcome?;
        match realized {
            Some(r) => daily.push(r),
            None => failed += 1,
        }
        diagnostics.push(diag);
    }
    let total = days.len();
    if failed * 20 > total {
        return Err(BacktestError::TooManyFailures { failed, total });
    }

    let ew = vec![1.0 / n as f64; n];
    let bench: Vec<f64> = days
        .iter()
        .map(|&d| pairwise_dot(table.data.row(d), &ew))
        .collect();

    Ok(BacktestRun {
        strategy: report_from_returns(daily, diagnostics),
        equal_weight: report_from_returns(bench, Vec::new()),
    })
}
