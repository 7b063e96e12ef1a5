//! Timing sweeps. Cells run on the worker pool; rows are emitted in
//! deterministic grid order and timings cover the solve only.

use std::time::Instant;

use rayon::prelude::*;
use ubsr::admm::{self, AdmmOptions, SaaProblem};
use ubsr::data::{generate_synthetic, GaussianStream, SyntheticSpec};
use ubsr::projection::{membership, Membership, ProjectionInstance, SolverKind};
use ubsr::LossFunction;

use crate::commands::run_projection;
use crate::CliError;

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<&str> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if items.is_empty() {
        return Err(CliError::Usage(format!("empty {what} list")));
    }
    items
        .into_iter()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn parse_solvers(s: &str) -> Result<Vec<SolverKind>, CliError> {
    let names: Vec<String> = parse_list(s, "solver")?;
    names
        .iter()
        .map(|n| match n.as_str() {
            "dirssn" => Ok(SolverKind::DirSsn),
            "sepssn" => Ok(SolverKind::SepSsn),
            "bisect" => Ok(SolverKind::Bisection),
            "ipm" => Ok(SolverKind::Ipm),
            other => Err(CliError::Usage(format!("unknown solver {other:?}"))),
        })
        .collect()
}

/// `kind:param` pairs, e.g. `exp:0.5` or `poly:2`.
fn parse_losses(s: &str) -> Result<Vec<(LossFunction, String)>, CliError> {
    let names: Vec<String> = parse_list(s, "loss")?;
    names
        .iter()
        .map(|n| {
            let (kind, param) = n
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("loss {n:?} must be kind:param")))?;
            let value: f64 = param
                .parse()
                .map_err(|_| CliError::Usage(format!("bad loss parameter in {n:?}")))?;
            let loss = match kind {
                "exp" => LossFunction::exponential(value),
                "poly" => LossFunction::piecewise_polynomial(value),
                other => return Err(CliError::Usage(format!("unknown loss kind {other:?}"))),
            }
            .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((loss, n.clone()))
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[allow(clippy::too_many_arguments)]
pub fn projection(
    dims: &str,
    solvers: &str,
    losses: &str,
    lambdas: &str,
    repeats: usize,
    seed: u64,
    out: &str,
) -> Result<(), CliError> {
    let dims: Vec<usize> = parse_list(dims, "dimension")?;
    let solvers = parse_solvers(solvers)?;
    let losses = parse_losses(losses)?;
    let lambdas: Vec<f64> = parse_list(lambdas, "lambda")?;
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be positive".into()));
    }

    struct Cell {
        m: usize,
        solver: SolverKind,
        loss: LossFunction,
        loss_name: String,
        lambda: f64,
        rep: usize,
        cell_seed: u64,
    }
    let mut cells = Vec::new();
    for &m in &dims {
        for &solver in &solvers {
            for (loss, name) in &losses {
                for &lambda in &lambdas {
                    for rep in 0..repeats {
                        let idx = cells.len() as u64;
                        cells.push(Cell {
                            m,
                            solver,
                            loss: *loss,
                            loss_name: name.clone(),
                            lambda,
                            rep,
                            cell_seed: splitmix(seed ^ splitmix(idx)),
                        });
                    }
                }
            }
        }
    }

    let rows: Vec<String> = cells
        .par_iter()
        .map(|cell| {
            let mut stream = GaussianStream::new(cell.cell_seed);
            let x = stream.vec(cell.m);
            let inst = match ProjectionInstance::new(x, cell.lambda, cell.loss) {
                Ok(i) => i,
                Err(e) => {
                    return format!(
                        "{},{},{},{},{},,,,,{}",
                        cell.m, cell.solver, cell.loss_name, cell.lambda, cell.rep, e
                    )
                }
            };
            let inside = matches!(membership(&inst), Ok((Membership::Inside, _)));
            let start = Instant::now();
            match run_projection(&inst, cell.solver, None) {
                Ok((result, _)) => {
                    let wall = start.elapsed().as_secs_f64();
                    format!(
                        "{},{},{},{},{},{},{},{},{},{}",
                        cell.m,
                        cell.solver,
                        cell.loss_name,
                        cell.lambda,
                        cell.rep,
                        wall,
                        result.kkt_residual,
                        result.iterations.outer,
                        result.iterations.inner,
                        if inside { "inside" } else { "" },
                    )
                }
                Err(e) => format!(
                    "{},{},{},{},{},,,,,solver-error: {}",
                    cell.m, cell.solver, cell.loss_name, cell.lambda, cell.rep, e
                ),
            }
        })
        .collect();

    let mut text = String::from(
        "m,solver,loss,lambda,rep,wall_time,kkt_residual,outer_iters,inner_iters,note\n",
    );
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| CliError::Io(format!("cannot write {out}: {e}")))
}

#[allow(clippy::too_many_arguments)]
pub fn optimize(
    ms: &str,
    ns: &str,
    losses: &str,
    lambdas: &str,
    alphas: &str,
    repeats: usize,
    seed: u64,
    out: &str,
    sigma0: f64,
    tau: f64,
) -> Result<(), CliError> {
    let ms: Vec<usize> = parse_list(ms, "m")?;
    let ns: Vec<usize> = parse_list(ns, "n")?;
    let losses = parse_losses(losses)?;
    let lambdas: Vec<f64> = parse_list(lambdas, "lambda")?;
    let alphas: Vec<f64> = parse_list(alphas, "alpha")?;
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be positive".into()));
    }
    if !(sigma0 > 0.0 && tau > 0.0) {
        return Err(CliError::Usage("sigma0 and tau must be positive".into()));
    }

    struct Cell {
        m: usize,
        n: usize,
        loss: LossFunction,
        loss_name: String,
        lambda: f64,
        alpha: f64,
        cell_seed: u64,
    }
    let mut cells = Vec::new();
    for &m in &ms {
        for &n in &ns {
            for (loss, name) in &losses {
                for &lambda in &lambdas {
                    for &alpha in &alphas {
                        let idx = cells.len() as u64;
                        cells.push(Cell {
                            m,
                            n,
                            loss: *loss,
                            loss_name: name.clone(),
                            lambda,
                            alpha,
                            cell_seed: splitmix(seed ^ splitmix(0x5eed ^ idx)),
                        });
                    }
                }
            }
        }
    }

    let opts = AdmmOptions {
        sigma0,
        tau,
        ..Default::default()
    };
    let rows: Vec<String> = cells
        .par_iter()
        .map(|cell| {
            let mut objectives = Vec::new();
            let mut times = Vec::new();
            let mut max_violation = 0.0f64;
            let mut converged_runs = 0usize;
            let mut error = String::new();
            for rep in 0..repeats {
                let spec =
                    SyntheticSpec::new(cell.n, cell.m, splitmix(cell.cell_seed ^ rep as u64));
                let table = match generate_synthetic(&spec) {
                    Ok(t) => t,
                    Err(e) => {
                        error = e.to_string();
                        break;
                    }
                };
                let problem =
                    match SaaProblem::new(table.data, cell.lambda, cell.alpha, None, cell.loss) {
                        Ok(p) => p,
                        Err(e) => {
                            error = e.to_string();
                            break;
                        }
                    };
                let start = Instant::now();
                match admm::solve(&problem, &opts) {
                    Ok((report, _)) => {
                        times.push(start.elapsed().as_secs_f64());
                        objectives.push(report.objective);
                        max_violation = max_violation.max(report.violation);
                        if report.converged {
                            converged_runs += 1;
                        }
                    }
                    Err(e) => {
                        error = e.to_string();
                        break;
                    }
                }
            }
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                cell.m,
                cell.n,
                cell.loss_name,
                cell.lambda,
                cell.alpha,
                repeats,
                mean(&objectives),
                mean(&times),
                max_violation,
                converged_runs,
                error
            )
        })
        .collect();

    let mut text = String::from(
        "m,n,loss,lambda,alpha,repeats,mean_objective,mean_time,max_violation,converged_runs,error\n",
    );
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| CliError::Io(format!("cannot write {out}: {e}")))
}
