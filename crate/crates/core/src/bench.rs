//! Benchmark harness: single gradients, tolerance and tableau sweeps,
//! training runs, and the accumulation-rounding experiment.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::accounting::AccountingReport;
use crate::engines::{
    compute_gradient, train_toy, Accumulation, Engine, EngineOptions, GradientResult, Precision, TrainingRun,
};
use crate::error::{Error, Result};
use crate::ivp::StepController;
use crate::kernels::relative_linf;
use crate::problems::{builtin_problem, Problem, TrainingTask};
use crate::tableau::builtin_tableau;

/// Default absolute tolerances of a tolerance sweep.
pub const DEFAULT_ATOLS: [f64; 6] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];

/// Column order of sweep output.
pub const CSV_HEADER: [&str; 12] = [
    "engine", "tableau", "atol", "rtol", "N", "nfe_fwd", "nfe_bwd", "vjp_count", "peak_scalars", "grad_err", "wall_ns",
    "status",
];

/// Solver settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tableau: String,
    pub atol: f64,
    /// Defaults to `100·atol`.
    pub rtol: Option<f64>,
    /// Fixed step size; overrides the tolerances when set.
    pub fixed_h: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tableau: "dopri5".into(), atol: 1e-8, rtol: None, fixed_h: None }
    }
}

impl SolverConfig {
    pub fn rtol(&self) -> f64 {
        self.rtol.unwrap_or(100.0 * self.atol)
    }

    pub fn controller(&self) -> StepController {
        match self.fixed_h {
            Some(h) => StepController::fixed(h),
            None => StepController::adaptive(self.atol, self.rtol()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub problem: String,
    pub engine: String,
    pub tableau: String,
    pub atol: f64,
    pub rtol: f64,
    pub fixed_h: Option<f64>,
    pub t0: f64,
    pub t1: f64,
    pub loss: f64,
    pub grad_x0: Vec<f64>,
    pub grad_theta: Vec<f64>,
    /// Relative ℓ∞ distance to backpropagation under the same solver
    /// settings, i.e. to the exact gradient of the discrete solution.
    pub gradient_error_vs_oracle: f64,
    /// Relative ℓ∞ distance to the closed-form gradient, when one exists.
    pub closed_form_error: Option<f64>,
    pub accounting: AccountingReport,
}

fn run_engine(problem: &Problem, engine: Engine, cfg: &SolverConfig) -> Result<(GradientResult, f64)> {
    let tab = builtin_tableau(&cfg.tableau)?;
    let ctrl = cfg.controller();
    let gp = problem.gradient_problem(&problem.theta0, &tab, &ctrl);
    let result = compute_gradient(engine, &gp, &EngineOptions::default())?;
    let err = if engine == Engine::BackpropFull {
        0.0
    } else {
        let reference = compute_gradient(Engine::BackpropFull, &gp, &EngineOptions::default())?;
        relative_linf(&result.flat_gradient(), &reference.flat_gradient())
    };
    Ok((result, err))
}

pub fn run_grad(problem: &Problem, engine: Engine, cfg: &SolverConfig) -> Result<GradReport> {
    let (result, err) = run_engine(problem, engine, cfg)?;
    let closed_form_error = problem.oracle.as_ref().map(|o| {
        let mut exact = o.grad_x0.clone();
        exact.extend_from_slice(&o.grad_theta);
        relative_linf(&result.flat_gradient(), &exact)
    });
    Ok(GradReport {
        problem: problem.name.clone(),
        engine: engine.id().into(),
        tableau: cfg.tableau.clone(),
        atol: cfg.atol,
        rtol: cfg.rtol(),
        fixed_h: cfg.fixed_h,
        t0: problem.t0,
        t1: problem.t1,
        loss: result.loss,
        grad_x0: result.grad_x0,
        grad_theta: result.grad_theta,
        gradient_error_vs_oracle: err,
        closed_form_error,
        accounting: result.accounting,
    })
}

/// One sweep cell. Numeric fields are empty when the run failed; `status`
/// then holds the error kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub engine: String,
    pub tableau: String,
    pub atol: f64,
    pub rtol: f64,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub nfe_fwd: Option<usize>,
    pub nfe_bwd: Option<usize>,
    pub vjp_count: Option<usize>,
    pub peak_scalars: Option<usize>,
    pub grad_err: Option<f64>,
    pub wall_ns: Option<u64>,
    pub status: String,
}

/// Runs one engine and summarizes it as a sweep row.
pub fn sweep_row(problem: &Problem, engine: Engine, cfg: &SolverConfig) -> SweepRow {
    let mut row = SweepRow {
        engine: engine.id().into(),
        tableau: cfg.tableau.clone(),
        atol: cfg.atol,
        rtol: cfg.rtol(),
        n: None,
        nfe_fwd: None,
        nfe_bwd: None,
        vjp_count: None,
        peak_scalars: None,
        grad_err: None,
        wall_ns: None,
        status: "ok".into(),
    };
    match run_engine(problem, engine, cfg) {
        Ok((r, err)) => {
            let a = r.accounting;
            row.n = Some(a.steps_accepted);
            row.nfe_fwd = Some(a.nfe_forward);
            row.nfe_bwd = Some(a.nfe_backward);
            row.vjp_count = Some(a.vjp_count);
            row.peak_scalars = Some(a.peak_retained_scalars);
            row.grad_err = Some(err);
            row.wall_ns = Some(a.wall_time_ns);
        }
        Err(e) => row.status = e.kind().into(),
    }
    row
}

/// Rows ordered by engine, then by tolerance. `rtol` is `100·atol` unless
/// `base.rtol` is set.
pub fn sweep_tolerance(problem: &Problem, engines: &[Engine], atols: &[f64], base: &SolverConfig) -> Result<Vec<SweepRow>> {
    builtin_tableau(&base.tableau)?;
    let cells: Vec<(Engine, SolverConfig)> = engines
        .iter()
        .flat_map(|&e| atols.iter().map(move |&atol| (e, SolverConfig { atol, fixed_h: None, ..base.clone() })))
        .collect();
    Ok(cells.par_iter().map(|(e, cfg)| sweep_row(problem, *e, cfg)).collect())
}

/// Rows ordered by tableau, then by engine.
pub fn sweep_tableau(problem: &Problem, engines: &[Engine], tableaus: &[String], base: &SolverConfig) -> Result<Vec<SweepRow>> {
    for t in tableaus {
        builtin_tableau(t)?;
    }
    let cells: Vec<(Engine, SolverConfig)> = tableaus
        .iter()
        .flat_map(|t| engines.iter().map(move |&e| (e, SolverConfig { tableau: t.clone(), ..base.clone() })))
        .collect();
    Ok(cells.par_iter().map(|(e, cfg)| sweep_row(problem, *e, cfg)).collect())
}

pub fn write_rows_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn run_train(task: &TrainingTask, engine: Engine, epochs: usize, lr: f64, cfg: &SolverConfig) -> Result<TrainingRun> {
    let tab = builtin_tableau(&cfg.tableau)?;
    train_toy(&task.problem, engine, epochs, lr, &tab, &cfg.controller(), &EngineOptions::default())
}

pub fn write_training_csv(run: &TrainingRun, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "nfe_fwd", "nfe_bwd", "vjp_count", "peak_scalars"]).map_err(csv_error)?;
    for (epoch, (loss, a)) in run.losses.iter().zip(&run.reports).enumerate() {
        w.serialize((epoch, loss, a.nfe_forward, a.nfe_backward, a.vjp_count, a.peak_retained_scalars))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Gradient errors of single-precision accumulation, two-level and flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingTrial {
    pub seed: u64,
    pub two_level_error: f64,
    pub flat_error: f64,
}

/// Symplectic parameter gradient of `mlp_node` on a random grid whose step
/// sizes span six decades, accumulated in simulated `f32` both ways and
/// compared with the `f64` result.
pub fn rounding_trial(seed: u64) -> Result<RoundingTrial> {
    let problem = builtin_problem("mlp_node")?;
    let tab = builtin_tableau("dopri5")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..120).map(|_| 10f64.powf(rng.gen_range(-6.0..0.0))).collect();
    let total: f64 = weights.iter().sum();
    let span = problem.t1 - problem.t0;
    let ctrl = StepController::prescribed(weights.iter().map(|w| w / total * span).collect());
    let gp = problem.gradient_problem(&problem.theta0, &tab, &ctrl);
    let run = |accumulation, precision| {
        let options = EngineOptions { accumulation, precision, ..Default::default() };
        compute_gradient(Engine::Symplectic, &gp, &options).map(|r| r.grad_theta)
    };
    let exact = run(Accumulation::TwoLevel, Precision::F64)?;
    let two = run(Accumulation::TwoLevel, Precision::SimulatedF32)?;
    let flat = run(Accumulation::Flat, Precision::SimulatedF32)?;
    Ok(RoundingTrial { seed, two_level_error: relative_linf(&two, &exact), flat_error: relative_linf(&flat, &exact) })
}

/// Splits a comma-separated list, dropping empty items.
pub fn parse_list<T, F: Fn(&str) -> Result<T>>(s: &str, parse: F) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(parse).collect()
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep_is_header_only() {
        let p = builtin_problem("decay").unwrap();
        let rows = sweep_tolerance(&p, &[], &DEFAULT_ATOLS, &SolverConfig::default()).unwrap();
        let mut out = Vec::new();
        write_rows_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn failed_cells_are_flagged() {
        let p = builtin_problem("decay").unwrap();
        let cfg = SolverConfig { tableau: "dopri5".into(), ..Default::default() };
        let mut rows = sweep_tolerance(&p, &[Engine::Symplectic], &[1e-6], &cfg).unwrap();
        assert_eq!(rows[0].status, "ok");
        let bad = SolverConfig { atol: -1.0, ..cfg };
        rows = sweep_tolerance(&p, &[Engine::Symplectic], &[-1.0], &bad).unwrap();
        assert_eq!(rows[0].status, "InvalidArgument");
        assert_eq!(rows[0].n, None);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("1e-3, 2", parse_f64).unwrap(), vec![1e-3, 2.0]);
        assert!(parse_list("", parse_f64).unwrap().is_empty());
        assert!(parse_list("x", parse_f64).is_err());
    }
}
