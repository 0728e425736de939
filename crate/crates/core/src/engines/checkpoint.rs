use crate::accounting::{AccountingReport, MemoryMeter};
use crate::dynamics::{Bound, Tape};
use crate::error::Result;
use crate::ivp::{integrate, step_generic};

use super::backprop::TapeBackend;
use super::{GradientProblem, GradientResult};

/// Keeps every `x_n`; the backward pass re-records one step at a time and
/// sweeps its tape.
pub(crate) fn step_checkpoint(p: &GradientProblem<'_>) -> Result<GradientResult> {
    let d = p.d();
    let meter = MemoryMeter::new();
    let traj = integrate(&Bound::new(p.dynamics, p.theta), p.x0, p.t0, p.t1, p.tableau, p.controller)?;
    let n_steps = traj.n_steps();
    meter.alloc((n_steps + 1) * d);

    let loss = p.loss.terminal.value(&traj.x_final);
    let mut lambda = p.loss.terminal.gradient(&traj.x_final);
    let mut grad_theta = vec![0.0; p.theta.len()];
    let mut trace = vec![lambda.clone()];
    let active = p.tableau.active_stages();
    let (mut nfe_backward, mut vjps) = (0, 0);

    for rec in traj.records.iter().rev() {
        let mut tape = Tape::new(Some(meter.clone()));
        let theta = tape.param(p.theta);
        let x = tape.input(&rec.x);
        let mut be = TapeBackend::new(&mut tape, p.dynamics, theta);
        let st = step_generic(&mut be, p.tableau, rec.t, rec.h, &x, None, active, false)?;
        nfe_backward += st.evals;
        vjps += st.evals;
        let mut g = tape.backward(st.x_next, &lambda, &[x, theta])?;
        for (acc, v) in grad_theta.iter_mut().zip(&g[1]) {
            *acc += v;
        }
        lambda = g.swap_remove(0);
        trace.push(lambda.clone());
        meter.free(d);
    }
    meter.free(d);
    trace.reverse();

    Ok(GradientResult {
        loss,
        grad_x0: lambda,
        grad_theta,
        accounting: AccountingReport {
            peak_retained_scalars: meter.peak(),
            nfe_forward: traj.nfe,
            nfe_backward,
            vjp_count: vjps,
            steps_accepted: n_steps,
            steps_rejected: traj.rejected,
            steps_backward: n_steps,
            ..Default::default()
        },
        adjoint_trace: Some(trace),
        step_sizes: traj.step_sizes(),
    })
}
