//! Engines that differentiate a tape of the whole integration.

use crate::accounting::{AccountingReport, MemoryMeter};
use crate::dynamics::{Bound, Dynamics, Tape, Var};
use crate::error::Result;
use crate::ivp::{integrate_generic, PlainBackend, StageBackend};

use super::{GradientProblem, GradientResult};

/// Stage storage on a tape; dynamics evaluations become tape nodes.
pub(crate) struct TapeBackend<'t, 'a> {
    pub tape: &'t mut Tape<'a>,
    pub dynamics: &'a dyn Dynamics,
    pub theta: Var,
    pub evals: usize,
}

impl<'t, 'a> TapeBackend<'t, 'a> {
    pub fn new(tape: &'t mut Tape<'a>, dynamics: &'a dyn Dynamics, theta: Var) -> Self {
        TapeBackend { tape, dynamics, theta, evals: 0 }
    }
}

impl StageBackend for TapeBackend<'_, '_> {
    type V = Var;
    type Mark = (usize, usize);

    fn value<'s>(&'s self, v: &'s Var) -> &'s [f64] {
        self.tape.value(*v)
    }

    fn eval(&mut self, x: &Var, t: f64) -> Result<Var> {
        self.evals += 1;
        Ok(self.tape.record_dynamics(self.dynamics, *x, t, self.theta))
    }

    fn combine(&mut self, base: &Var, h: f64, terms: &[(f64, &Var)]) -> Var {
        let terms: Vec<(f64, Var)> = terms.iter().map(|(c, v)| (*c, **v)).collect();
        self.tape.combine(*base, h, &terms)
    }

    fn mark(&self) -> (usize, usize) {
        (self.tape.mark(), self.evals)
    }

    fn rollback(&mut self, (mark, evals): (usize, usize)) {
        self.tape.truncate(mark);
        self.evals = evals;
    }
}

struct TapedRun {
    loss: f64,
    grad_x0: Vec<f64>,
    grad_theta: Vec<f64>,
    nfe: usize,
    swept_evals: usize,
    step_sizes: Vec<f64>,
    rejected: usize,
}

/// Records the whole integration on one tape and sweeps it once.
fn taped_run(p: &GradientProblem<'_>, meter: &MemoryMeter) -> Result<TapedRun> {
    let mut tape = Tape::new(Some(meter.clone()));
    let theta = tape.param(p.theta);
    let x0 = tape.input(p.x0);
    let mut be = TapeBackend::new(&mut tape, p.dynamics, theta);
    let traj = integrate_generic(&mut be, x0, p.t0, p.t1, p.tableau, p.controller, false)?;
    let swept_evals = be.evals;
    let x_final = tape.value(traj.x_final);
    let loss = p.loss.terminal.value(x_final);
    let seed = p.loss.terminal.gradient(x_final);
    let mut g = tape.backward(traj.x_final, &seed, &[x0, theta])?;
    let grad_theta = g.pop().unwrap_or_default();
    let grad_x0 = g.pop().unwrap_or_default();
    Ok(TapedRun {
        loss,
        grad_x0,
        grad_theta,
        nfe: traj.nfe,
        swept_evals,
        step_sizes: traj.grid.iter().map(|g| g.1).collect(),
        rejected: traj.rejected,
    })
}

fn result(run: TapedRun, accounting: AccountingReport) -> GradientResult {
    GradientResult {
        loss: run.loss,
        grad_x0: run.grad_x0,
        grad_theta: run.grad_theta,
        accounting,
        adjoint_trace: None,
        step_sizes: run.step_sizes,
    }
}

pub(crate) fn backprop_full(p: &GradientProblem<'_>) -> Result<GradientResult> {
    let meter = MemoryMeter::new();
    let run = taped_run(p, &meter)?;
    let n = run.step_sizes.len();
    let accounting = AccountingReport {
        peak_retained_scalars: meter.peak(),
        nfe_forward: run.nfe,
        nfe_backward: 0,
        vjp_count: run.swept_evals,
        steps_accepted: n,
        steps_rejected: run.rejected,
        steps_backward: n,
        ..Default::default()
    };
    Ok(result(run, accounting))
}

/// Plain forward pass keeping only `x0`, then a recorded re-run.
pub(crate) fn baseline(p: &GradientProblem<'_>) -> Result<GradientResult> {
    let meter = MemoryMeter::new();
    meter.alloc(p.d());
    let field = Bound::new(p.dynamics, p.theta);
    let mut plain = PlainBackend { f: &field };
    let first = integrate_generic(&mut plain, p.x0.to_vec(), p.t0, p.t1, p.tableau, p.controller, false)?;
    drop(first.x_final);
    let run = taped_run(p, &meter)?;
    meter.free(p.d());
    let n = run.step_sizes.len();
    let accounting = AccountingReport {
        peak_retained_scalars: meter.peak(),
        nfe_forward: first.nfe,
        nfe_backward: run.nfe,
        vjp_count: run.swept_evals,
        steps_accepted: n,
        steps_rejected: run.rejected,
        steps_backward: n,
        ..Default::default()
    };
    Ok(result(run, accounting))
}
