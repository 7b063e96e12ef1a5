//! Subcommand implementations.

use std::time::Instant;

use serde_json::json;
use ubsr::admm::{self, SaaProblem};
use ubsr::backtest::{run_backtest, BacktestConfig, BacktestReport};
use ubsr::data::{generate_synthetic, ingest_csv, SyntheticSpec};
use ubsr::estimator::{estimate_ubsr, EstimatorError};
use ubsr::projection::{
    kkt_certificate, membership, project_bisection, project_dirssn, project_ipm, project_sepssn,
    BisectionParams, DirSsnParams, IpmParams, IterationCounts, Membership, NewtonTrace,
    ProjectionError, ProjectionInstance, ProjectionResult, SepSsnParams, SolverKind,
};

use crate::config::{parse_r0, parse_r0_rule, ConfigFile};
use crate::vecio::{derived_path, read_vector, write_json, write_vector_csv};
use crate::{CliError, LogLevel, LossArgs, SolverArg};

pub const SCHEMA_VERSION: u32 = 1;

/// Vectors longer than this go to a side CSV instead of inline JSON.
const INLINE_U_LIMIT: usize = 1000;

pub fn estimate(
    loss_args: &LossArgs,
    lambda: f64,
    input: &str,
    tol: f64,
    out: Option<&str>,
) -> Result<(), CliError> {
    if !(tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let loss = loss_args.build()?;
    let samples = read_vector(input)?;
    let est = estimate_ubsr(&samples, lambda, &loss, tol).map_err(|e| match e {
        EstimatorError::NoSignChange { .. } => CliError::Usage(e.to_string()),
        EstimatorError::InvalidSamples => CliError::Io(format!("{input}: {e}")),
        other => CliError::Solver(other.to_string()),
    })?;
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "t": est.t,
            "residual": est.residual,
            "iterations": est.iterations,
        }),
    )
}

pub fn run_projection(
    inst: &ProjectionInstance,
    solver: SolverKind,
    tol: Option<f64>,
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
        SolverKind::DirSsn => {
            let mut params = DirSsnParams::default();
            if let Some(t) = tol {
                params.tol = t;
            }
            project_dirssn(inst, None, &params)
        }
        SolverKind::SepSsn => {
            let mut params = SepSsnParams::default();
            if let Some(t) = tol {
                params.tol = t;
            }
            project_sepssn(inst, &params)
        }
        SolverKind::Bisection => {
            let mut params = BisectionParams::default();
            if let Some(t) = tol {
                params.tol = t;
            }
            project_bisection(inst, &params).map(|r| (r, NewtonTrace::default()))
        }
        SolverKind::Ipm => {
            let mut params = IpmParams::default();
            if let Some(t) = tol {
                params.tol = t;
            }
            project_ipm(inst, &params)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn project(
    solver: SolverArg,
    loss_args: &LossArgs,
    lambda: f64,
    input: &str,
    out: &str,
    tol: Option<f64>,
    u_out: Option<&str>,
) -> Result<(), CliError> {
    let loss = loss_args.build()?;
    let x = read_vector(input)?;
    let inst =
        ProjectionInstance::new(x, lambda, loss).map_err(|e| CliError::Usage(e.to_string()))?;
    let kind: SolverKind = solver.into();
    let start = Instant::now();
    let (result, _) =
        run_projection(&inst, kind, tol).map_err(|e| CliError::Solver(e.to_string()))?;
    let wall = start.elapsed().as_secs_f64();

    let (u_inline, u_path) = if result.u.len() <= INLINE_U_LIMIT {
        (json!(result.u), json!(null))
    } else {
        let path = u_out
            .map(str::to_string)
            .unwrap_or_else(|| derived_path(out, "_u.csv"));
        write_vector_csv(&path, "u", &result.u)?;
        (json!(null), json!(path))
    };
    write_json(
        Some(out),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "solver": kind.to_string(),
            "m": result.u.len(),
            "rho": result.rho,
            "kkt_residual": result.kkt_residual,
            "iterations": {
                "outer": result.iterations.outer,
                "inner": result.iterations.inner,
                "backtracks": result.iterations.backtracks,
            },
            "hessian_surrogate": result.hessian_surrogate,
            "wall_time": wall,
            "u": u_inline,
            "u_path": u_path,
        }),
    )
}

pub fn optimize(
    config_path: &str,
    input_flag: Option<&str>,
    out: Option<&str>,
    weights: Option<&str>,
    log: LogLevel,
) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config_path)?;
    let section = cfg
        .optimize
        .as_ref()
        .ok_or_else(|| CliError::Usage("config: missing [optimize] section".into()))?;
    let loss = cfg.loss()?;
    let input = input_flag
        .map(str::to_string)
        .or_else(|| section.input.clone())
        .ok_or_else(|| {
            CliError::Usage("no return CSV: pass --input or set optimize.input".into())
        })?;

    let table =
        ingest_csv(std::path::Path::new(&input), &cfg.ingest_policy()).map_err(|e| match e {
            ubsr::data::DataError::Io(io) => CliError::Io(format!("{input}: {io}")),
            other => CliError::Io(format!("{input}: {other}")),
        })?;
    warn_all(log, &table.warnings);

    let r0 = parse_r0(&section.r0)?;
    let problem = SaaProblem::new(table.data, section.lambda, section.alpha, r0, loss)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    warn_all(log, problem.warnings());

    let opts = cfg.admm_options();
    let (report, state) =
        admm::solve(&problem, &opts).map_err(|e| CliError::Solver(e.to_string()))?;

    let weights_path = weights
        .map(str::to_string)
        .unwrap_or_else(|| derived_path(out.unwrap_or("optimize.json"), "_w.csv"));
    write_vector_csv(&weights_path, "weight", &state.w)?;
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "objective": report.objective,
            "violation": report.violation,
            "iterations": report.iterations,
            "wall_time": report.wall_time,
            "converged": report.converged,
            "primal_residual": report.primal_residual,
            "dual_residual": report.dual_residual,
            "wt_inexact": report.wt_inexact,
            "t": state.t,
            "warnings": report.warnings,
            "weights_path": weights_path,
        }),
    )?;
    if !report.converged {
        return Err(CliError::Solver(format!(
            "no convergence in {} iterations (primal {:.3e}, dual {:.3e})",
            report.iterations, report.primal_residual, report.dual_residual
        )));
    }
    Ok(())
}

fn report_summary(r: &BacktestReport) -> serde_json::Value {
    json!({
        "days": r.daily_returns.len(),
        "mean_return": r.mean_return,
        "volatility": r.volatility,
        "sharpe": r.sharpe,
        "max_drawdown": r.max_drawdown,
        "failures": r.diagnostics.iter().filter(|d| !d.converged).count(),
    })
}

pub fn backtest(
    config_path: &str,
    input: &str,
    out: Option<&str>,
    series: Option<&str>,
    log: LogLevel,
) -> Result<(), CliError> {
    let cfg = ConfigFile::load(config_path)?;
    let section = cfg
        .backtest
        .as_ref()
        .ok_or_else(|| CliError::Usage("config: missing [backtest] section".into()))?;
    let loss = cfg.loss()?;
    let table = ingest_csv(std::path::Path::new(input), &cfg.ingest_policy())
        .map_err(|e| CliError::Io(format!("{input}: {e}")))?;
    warn_all(log, &table.warnings);

    let mut bt = BacktestConfig::new(loss, section.lambda, section.alpha);
    bt.window = section.window;
    bt.r0_rule = parse_r0_rule(&section.r0_rule)?;
    bt.admm = cfg.admm_options();

    let run = match run_backtest(&table, &bt) {
        Ok(r) => r,
        Err(e @ ubsr::backtest::BacktestError::TooManyFailures { .. }) => {
            return Err(CliError::Solver(e.to_string()))
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };

    if let Some(series_path) = series {
        let mut text = String::from(
            "day,strategy_return,strategy_cumulative,equal_weight_return,equal_weight_cumulative\n",
        );
        let strat = &run.strategy;
        let ew = &run.equal_weight;
        // The strategy series may be shorter when days were skipped; align by
        // index within each series.
        let rows = strat.daily_returns.len().max(ew.daily_returns.len());
        for i in 0..rows {
            let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                cell(strat.daily_returns.get(i)),
                cell(strat.cumulative.get(i)),
                cell(ew.daily_returns.get(i)),
                cell(ew.cumulative.get(i)),
            ));
        }
        std::fs::write(series_path, text)
            .map_err(|e| CliError::Io(format!("cannot write {series_path}: {e}")))?;
    }

    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "window": bt.window,
            "strategy": report_summary(&run.strategy),
            "equal_weight": report_summary(&run.equal_weight),
        }),
    )
}

pub fn gen_data(
    n: usize,
    m: usize,
    seed: u64,
    corr_coef: f64,
    out: &str,
    log: LogLevel,
) -> Result<(), CliError> {
    let mut spec = SyntheticSpec::new(n, m, seed);
    spec.corr_coef = corr_coef;
    let table = generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    warn_all(log, &table.warnings);
    let mut text = table.labels.join(",");
    text.push('\n');
    for i in 0..m {
        let row: Vec<String> = table.data.row(i).iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| CliError::Io(format!("cannot write {out}: {e}")))
}

pub fn warn_all(log: LogLevel, warnings: &[String]) {
    if log >= LogLevel::Warn {
        for w in warnings {
            eprintln!("warning: {w}");
        }
    }
}
