use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use symplectic_adjoint::bench::{
    parse_f64, parse_list, run_grad, run_train, sweep_row, sweep_tableau, sweep_tolerance, write_rows_csv, write_training_csv,
    SolverConfig, SweepRow, DEFAULT_ATOLS,
};
use symplectic_adjoint::engines::Engine;
use symplectic_adjoint::problems::{builtin_problem_with, training_task, Problem};
use symplectic_adjoint::tableau::BUILTIN_TABLEAUS;
use symplectic_adjoint::{Error, Result};

#[derive(Parser)]
#[command(name = "sadj", version, about = "Gradient engines for ODE solutions: single runs, sweeps and toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one gradient and print it with its cost report.
    Grad(GradArgs),
    /// Sweep absolute tolerances for a set of engines.
    SweepTolerance(SweepToleranceArgs),
    /// Sweep Runge-Kutta methods for a set of engines.
    SweepTableau(SweepTableauArgs),
    /// Fit the problem's parameters by gradient descent.
    Train(TrainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, default_value = "mlp_node")]
    problem: String,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProblemArgs {
    fn span(&self, name: &str) -> Result<Option<(f64, f64)>> {
        if self.t0.is_none() && self.t1.is_none() {
            return Ok(None);
        }
        let default = builtin_problem_with(name, self.seed, None)?;
        Ok(Some((self.t0.unwrap_or(default.t0), self.t1.unwrap_or(default.t1))))
    }

    fn build(&self) -> Result<Problem> {
        builtin_problem_with(&self.problem, self.seed, self.span(&self.problem)?)
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    atol: Option<String>,
    /// Defaults to 100 × atol.
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    fixed_h: Option<f64>,
}

impl SolverArgs {
    fn config(&self, tableau: &str) -> Result<SolverConfig> {
        let atol = match &self.atol {
            Some(s) => parse_f64(s)?,
            None => 1e-8,
        };
        Ok(SolverConfig { tableau: tableau.into(), atol, rtol: self.rtol, fixed_h: self.fixed_h })
    }
}

#[derive(Args)]
struct GradArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "symplectic")]
    engine: String,
    #[arg(long, default_value = "dopri5")]
    tableau: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SweepToleranceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated engine identifiers.
    #[arg(long, default_value = "adjoint,symplectic")]
    engines: String,
    #[arg(long, default_value = "dopri5")]
    tableau: String,
    /// Comma-separated absolute tolerances.
    #[arg(long)]
    atol: Option<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SweepTableauArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "step_checkpoint,symplectic")]
    engines: String,
    /// Comma-separated tableau names.
    #[arg(long)]
    tableaus: Option<String>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "symplectic")]
    engine: String,
    #[arg(long, default_value = "dopri5")]
    tableau: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Where to write the trained parameters.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn engines(s: &str) -> Result<Vec<Engine>> {
    parse_list(s, |e| e.parse())
}

fn emit_rows(rows: &[SweepRow], format: Format) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Csv => write_rows_csv(rows, &mut out),
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(out)?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Grad(args) => {
            let engine: Engine = args.engine.parse()?;
            let problem = args.problem.build()?;
            let cfg = args.solver.config(&args.tableau)?;
            match args.format {
                Format::Json => {
                    let report = run_grad(&problem, engine, &cfg)?;
                    let stdout = io::stdout();
                    let mut out = stdout.lock();
                    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Error::Format(e.to_string()))?;
                    writeln!(out)?;
                }
                Format::Csv => emit_rows(&[sweep_row(&problem, engine, &cfg)], Format::Csv)?,
            }
        }
        Command::SweepTolerance(args) => {
            let engines = engines(&args.engines)?;
            let problem = args.problem.build()?;
            let atols = match &args.atol {
                Some(s) => parse_list(s, parse_f64)?,
                None => DEFAULT_ATOLS.to_vec(),
            };
            let base = SolverConfig { tableau: args.tableau.clone(), atol: 1e-8, rtol: args.rtol, fixed_h: None };
            emit_rows(&sweep_tolerance(&problem, &engines, &atols, &base)?, args.format)?;
        }
        Command::SweepTableau(args) => {
            let engines = engines(&args.engines)?;
            let problem = args.problem.build()?;
            let tableaus = match &args.tableaus {
                Some(s) => parse_list(s, |t| Ok(t.to_string()))?,
                None => BUILTIN_TABLEAUS.iter().map(|t| t.to_string()).collect(),
            };
            let base = args.solver.config("dopri5")?;
            emit_rows(&sweep_tableau(&problem, &engines, &tableaus, &base)?, args.format)?;
        }
        Command::Train(args) => {
            let engine: Engine = args.engine.parse()?;
            let span = args.problem.span(&args.problem.problem)?;
            let task = training_task(&args.problem.problem, args.problem.seed, span)?;
            let cfg = args.solver.config(&args.tableau)?;
            let run = run_train(&task, engine, args.epochs, args.lr, &cfg)?;
            if let Some(path) = &args.out {
                task.problem.param_file(&run.theta).save(path)?;
            }
            let stdout = io::stdout();
            let mut out = stdout.lock();
            match args.format {
                Format::Csv => write_training_csv(&run, &mut out)?,
                Format::Json => {
                    let doc = json!({ "losses": run.losses, "theta": run.theta, "accounting": run.reports });
                    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Format(e.to_string()))?;
                    writeln!(out)?;
                }
            }
        }
    }
    Ok(())
}

fn report_error(kind: &str, message: &str) {
    let doc = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("UsageError", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
