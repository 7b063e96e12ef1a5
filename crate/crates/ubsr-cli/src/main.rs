//! `ubsr` — estimation, projection, optimization, and backtesting for
//! utility-based shortfall risk.
//!
//! Exit codes: 0 success, 1 solver non-convergence, 2 usage or configuration
//! error, 3 i/o error.

mod bench;
mod commands;
mod config;
mod vecio;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::process::ExitCode;
use ubsr::projection::SolverKind;
use ubsr::LossFunction;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, ValueEnum)]
pub enum LogLevel {
    Quiet,
    Warn,
    Info,
}

#[derive(Parser)]
#[command(name = "ubsr", version, about = "Utility-based shortfall risk toolkit")]
struct Cli {
    /// Seed for all randomized commands; identical configurations reproduce
    /// identical numerical output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct LossArgs {
    /// Loss family.
    #[arg(long, value_enum)]
    loss: LossFamily,
    /// Exponent rate for the `exp` family.
    #[arg(long)]
    beta: Option<f64>,
    /// Power for the `poly` family (>= 2).
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossFamily {
    Exp,
    Poly,
}

impl LossArgs {
    pub fn build(&self) -> Result<LossFunction, CliError> {
        let loss = match self.loss {
            LossFamily::Exp => {
                let beta = self
                    .beta
                    .ok_or_else(|| CliError::Usage("--loss exp requires --beta".to_string()))?;
                LossFunction::exponential(beta)
            }
            LossFamily::Poly => {
                let eta = self
                    .eta
                    .ok_or_else(|| CliError::Usage("--loss poly requires --eta".to_string()))?;
                LossFunction::piecewise_polynomial(eta)
            }
        };
        loss.map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Dirssn,
    Sepssn,
    Bisect,
    Ipm,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Dirssn => SolverKind::DirSsn,
            SolverArg::Sepssn => SolverKind::SepSsn,
            SolverArg::Bisect => SolverKind::Bisection,
            SolverArg::Ipm => SolverKind::Ipm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the shortfall risk of a sampled position.
    Estimate {
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long)]
        lambda: f64,
        /// Sample CSV: one value per line, optional header.
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<String>,
    },
    /// Project a point onto the shortfall-feasibility set.
    Project {
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        input: String,
        #[arg(long)]
        out: String,
        /// Override the solver's convergence tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Where to write the projected vector when it is too large to
        /// inline in the JSON (default: `<out>` with a `_u.csv` suffix).
        #[arg(long)]
        u_out: Option<String>,
    },
    /// Solve the portfolio problem described by a config file.
    Optimize {
        #[arg(long)]
        config: String,
        /// Return CSV; overrides the config's `input`.
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        out: Option<String>,
        /// Weight-vector CSV path (default: `<out>` with a `_w.csv` suffix).
        #[arg(long)]
        weights: Option<String>,
    },
    /// Rolling-window out-of-sample evaluation.
    Backtest {
        #[arg(long)]
        config: String,
        #[arg(long)]
        input: String,
        #[arg(long)]
        out: Option<String>,
        /// Per-day return series CSV.
        #[arg(long)]
        series: Option<String>,
    },
    /// Generate a synthetic return CSV.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 0.35)]
        corr_coef: f64,
    },
    /// Timing and accuracy sweeps.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Time the projection solvers over a grid of dimensions and losses.
    Projection {
        /// Comma-separated dimensions, e.g. 1000,10000,100000.
        #[arg(long)]
        dims: String,
        /// Comma-separated solvers, e.g. sepssn,dirssn,bisect,ipm.
        #[arg(long)]
        solvers: String,
        /// Comma-separated losses as kind:param, e.g. exp:0.5,poly:2.
        #[arg(long)]
        losses: String,
        #[arg(long)]
        lambdas: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: String,
    },
    /// Time the portfolio solver over a grid of problem sizes.
    Optimize {
        #[arg(long)]
        ms: String,
        #[arg(long)]
        ns: String,
        #[arg(long)]
        losses: String,
        #[arg(long)]
        lambdas: String,
        #[arg(long, default_value_t = String::from("0,0.5"))]
        alphas: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 1e-6)]
        sigma0: f64,
        #[arg(long, default_value_t = 1.7)]
        tau: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".to_string()));
        }
        // Ignore failure: the global pool can only be installed once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let log = cli.log_level;
    match cli.command {
        Command::Estimate {
            loss,
            lambda,
            input,
            tol,
            out,
        } => commands::estimate(&loss, lambda, &input, tol, out.as_deref()),
        Command::Project {
            solver,
            loss,
            lambda,
            input,
            out,
            tol,
            u_out,
        } => commands::project(solver, &loss, lambda, &input, &out, tol, u_out.as_deref()),
        Command::Optimize {
            config,
            input,
            out,
            weights,
        } => commands::optimize(
            &config,
            input.as_deref(),
            out.as_deref(),
            weights.as_deref(),
            log,
        ),
        Command::Backtest {
            config,
            input,
            out,
            series,
        } => commands::backtest(&config, &input, out.as_deref(), series.as_deref(), log),
        Command::GenData {
            n,
            m,
            out,
            corr_coef,
        } => commands::gen_data(n, m, cli.seed, corr_coef, &out, log),
        Command::Bench(BenchCommand::Projection {
            dims,
            solvers,
            losses,
            lambdas,
            repeats,
            out,
        }) => bench::projection(&dims, &solvers, &losses, &lambdas, repeats, cli.seed, &out),
        Command::Bench(BenchCommand::Optimize {
            ms,
            ns,
            losses,
            lambdas,
            alphas,
            repeats,
            out,
            sigma0,
            tau,
        }) => bench::optimize(
            &ms, &ns, &losses, &lambdas, &alphas, repeats, cli.seed, &out, sigma0, tau,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
