//! Gradient engines for `L(x(t1))` with respect to `x0` and `θ`.
//!
//! | engine            | retained during backward          | gradient            |
//! |-------------------|-----------------------------------|---------------------|
//! | `backprop_full`   | tape of the whole integration     | exact               |
//! | `baseline`        | `x0`, then the whole tape again   | exact               |
//! | `step_checkpoint` | every `x_n` plus one step's tape  | exact               |
//! | `adjoint`         | `x(t1)` only                      | tolerance-dependent |
//! | `symplectic`      | every `x_n`, one step's stages, one evaluation's tape | exact |

mod backprop;
mod checkpoint;
mod continuous;
pub mod loss;
mod running;
mod symplectic;
mod train;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

pub use loss::{LossSpec, Running, RunningCost, Terminal, TerminalLoss};
pub use train::{train_toy, TrainingRun};

use crate::accounting::{AccountingReport, MemoryMeter};
use crate::dynamics::{check_shapes, tape_eval, Dynamics};
use crate::error::{Error, Result};
use crate::ivp::StepController;
use crate::tableau::ButcherTableau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    BackpropFull,
    Baseline,
    StepCheckpoint,
    Adjoint,
    Symplectic,
}

impl Engine {
    pub const ALL: [Engine; 5] =
        [Engine::BackpropFull, Engine::Baseline, Engine::StepCheckpoint, Engine::Adjoint, Engine::Symplectic];

    pub fn id(self) -> &'static str {
        match self {
            Engine::BackpropFull => "backprop_full",
            Engine::Baseline => "baseline",
            Engine::StepCheckpoint => "step_checkpoint",
            Engine::Adjoint => "adjoint",
            Engine::Symplectic => "symplectic",
        }
    }

    /// Whether the engine reproduces the gradient of the discrete solution.
    pub fn is_exact(self) -> bool {
        self != Engine::Adjoint
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Engine::ALL.into_iter().find(|e| e.id() == s).ok_or_else(|| Error::UnknownEngine(s.to_string()))
    }
}

/// Everything an engine needs: the field, the initial value, the solver and
/// the loss.
#[derive(Clone, Copy)]
pub struct GradientProblem<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub x0: &'a [f64],
    pub theta: &'a [f64],
    pub t0: f64,
    pub t1: f64,
    pub tableau: &'a ButcherTableau,
    pub controller: &'a StepController,
    pub loss: &'a LossSpec,
}

impl GradientProblem<'_> {
    fn check(&self) -> Result<()> {
        check_shapes(self.dynamics, self.x0, self.theta)?;
        self.tableau.validate()
    }

    fn d(&self) -> usize {
        self.dynamics.state_dim()
    }
}

/// Order in which parameter-gradient contributions are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accumulation {
    /// Sum each step's stage contributions locally, then add the step total.
    #[default]
    TwoLevel,
    /// Add every stage contribution straight into the running total.
    Flat,
}

/// Arithmetic used for the parameter-gradient accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    /// Every contribution and every partial sum is rounded to `f32`.
    SimulatedF32,
}

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    /// Controller for the continuous adjoint's backward solve. Defaults to
    /// the forward controller.
    pub backward_controller: Option<StepController>,
    /// Accumulation order for the symplectic engine.
    pub accumulation: Accumulation,
    pub precision: Precision,
    /// Keep the state adjoint at every step boundary.
    pub trace_adjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientResult {
    pub loss: f64,
    pub grad_x0: Vec<f64>,
    pub grad_theta: Vec<f64>,
    pub accounting: AccountingReport,
    /// With [`EngineOptions::trace_adjoint`]: `λ_n` for `n = 0 … N` on the
    /// forward grid, or the backward-grid adjoint for the continuous engine
    /// (ordered from `t0` to `t1`).
    #[serde(skip)]
    pub adjoint_trace: Option<Vec<Vec<f64>>>,
    /// Accepted forward step sizes.
    #[serde(skip)]
    pub step_sizes: Vec<f64>,
}

impl GradientResult {
    /// `[grad_x0, grad_theta]` as one vector.
    pub fn flat_gradient(&self) -> Vec<f64> {
        let mut g = self.grad_x0.clone();
        g.extend_from_slice(&self.grad_theta);
        g
    }
}

/// Runs `engine` on `problem`. A running cost, if present, is folded in as
/// an extra quadrature coordinate.
pub fn compute_gradient(engine: Engine, problem: &GradientProblem<'_>, options: &EngineOptions) -> Result<GradientResult> {
    problem.check()?;
    if problem.loss.running.is_some() {
        return running::fold(engine, problem, options);
    }
    let start = Instant::now();
    let mut result = match engine {
        Engine::BackpropFull => backprop::backprop_full(problem),
        Engine::Baseline => backprop::baseline(problem),
        Engine::StepCheckpoint => checkpoint::step_checkpoint(problem),
        Engine::Adjoint => continuous::adjoint(problem, options),
        Engine::Symplectic => symplectic::symplectic(problem, options),
    }?;
    let acc = &mut result.accounting;
    acc.wall_time_ns = start.elapsed().as_nanos() as u64;
    acc.engine = engine.id().to_string();
    acc.components = 1;
    acc.stages = problem.tableau.evals_per_step();
    acc.tape_scalars_per_eval = tape_scalars_per_eval(problem);
    if !options.trace_adjoint {
        result.adjoint_trace = None;
    }
    Ok(result)
}

fn tape_scalars_per_eval(p: &GradientProblem<'_>) -> usize {
    let meter = MemoryMeter::new();
    let rec = tape_eval(p.dynamics, p.x0, p.t0, p.theta, Some(meter.clone())).expect("shapes checked");
    let n = rec.live_scalar_count();
    drop(rec);
    n
}

pub fn grad_backprop_full(problem: &GradientProblem<'_>) -> Result<GradientResult> {
    compute_gradient(Engine::BackpropFull, problem, &EngineOptions::default())
}

pub fn grad_baseline_checkpoint(problem: &GradientProblem<'_>) -> Result<GradientResult> {
    compute_gradient(Engine::Baseline, problem, &EngineOptions::default())
}

pub fn grad_step_checkpoint(problem: &GradientProblem<'_>) -> Result<GradientResult> {
    compute_gradient(Engine::StepCheckpoint, problem, &EngineOptions::default())
}

/// Continuous adjoint with its own backward controller.
pub fn grad_adjoint_continuous(problem: &GradientProblem<'_>, backward: &StepController) -> Result<GradientResult> {
    let options = EngineOptions { backward_controller: Some(backward.clone()), ..Default::default() };
    compute_gradient(Engine::Adjoint, problem, &options)
}

pub fn grad_symplectic_adjoint(problem: &GradientProblem<'_>, options: &EngineOptions) -> Result<GradientResult> {
    compute_gradient(Engine::Symplectic, problem, options)
}

/// Symplectic adjoint for a loss with a running cost.
pub fn grad_with_running_cost(problem: &GradientProblem<'_>) -> Result<GradientResult> {
    compute_gradient(Engine::Symplectic, problem, &EngineOptions::default())
}

/// Sums `weight·g` contributions under a chosen order and precision.
pub(crate) struct GradAccumulator {
    total: Vec<f64>,
    step: Vec<f64>,
    accumulation: Accumulation,
    precision: Precision,
}

impl GradAccumulator {
    pub fn new(len: usize, accumulation: Accumulation, precision: Precision) -> Self {
        GradAccumulator { total: vec![0.0; len], step: vec![0.0; len], accumulation, precision }
    }

    fn round(&self, v: f64) -> f64 {
        match self.precision {
            Precision::F64 => v,
            Precision::SimulatedF32 => v as f32 as f64,
        }
    }

    pub fn add(&mut self, weight: f64, g: &[f64]) {
        let f32_mode = self.precision == Precision::SimulatedF32;
        let target = match self.accumulation {
            Accumulation::TwoLevel => &mut self.step,
            Accumulation::Flat => &mut self.total,
        };
        for (acc, gk) in target.iter_mut().zip(g) {
            let c = weight * gk;
            *acc = if f32_mode { ((*acc as f32) + (c as f32)) as f64 } else { *acc + c };
        }
    }

    pub fn end_step(&mut self) {
        if self.accumulation == Accumulation::TwoLevel {
            for k in 0..self.total.len() {
                self.total[k] = self.round(self.total[k] + self.step[k]);
                self.step[k] = 0.0;
            }
        }
    }

    pub fn finish(mut self) -> Vec<f64> {
        self.end_step();
        self.total
    }
}
