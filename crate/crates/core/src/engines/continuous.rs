use std::cell::Cell;

use crate::accounting::{AccountingReport, MemoryMeter};
use crate::dynamics::{tape_eval, Bound, Dynamics};
use crate::error::Result;
use crate::ivp::{integrate_generic, PlainBackend, StepController, StepMode, VectorField};

use super::{EngineOptions, GradientProblem, GradientResult};

/// `z = (x, λ, λ_θ)` with `dz/dt = (f, -J_xᵀλ, -J_θᵀλ)`; one recorded
/// evaluation serves both the state and the adjoint rows.
struct AdjointField<'a> {
    f: &'a dyn Dynamics,
    theta: &'a [f64],
    meter: MemoryMeter,
    vjps: Cell<usize>,
}

impl VectorField for AdjointField<'_> {
    fn dim(&self) -> usize {
        2 * self.f.state_dim() + self.f.param_dim()
    }

    fn eval(&self, z: &[f64], t: f64) -> Vec<f64> {
        let d = self.f.state_dim();
        let mut rec = tape_eval(self.f, &z[..d], t, self.theta, Some(self.meter.clone())).expect("shapes checked");
        let mut out = rec.value().to_vec();
        let v = rec.vjp(&z[d..2 * d]).expect("fresh recording");
        self.vjps.set(self.vjps.get() + 1);
        out.extend(v.gx.iter().map(|g| -g));
        out.extend(v.gtheta.iter().map(|g| -g));
        out
    }
}

/// The forward controller mirrored onto the reversed interval.
fn default_backward(forward: &StepController) -> StepController {
    match &forward.mode {
        StepMode::Prescribed { steps } => {
            let mut c = forward.clone();
            c.mode = StepMode::Prescribed { steps: steps.iter().rev().map(|h| -h).collect() };
            c
        }
        _ => forward.clone(),
    }
}

/// Solves the state backward together with its adjoint, keeping only
/// `x(t1)` from the forward pass. Error control uses one norm over the whole
/// augmented vector.
pub(crate) fn adjoint(p: &GradientProblem<'_>, options: &EngineOptions) -> Result<GradientResult> {
    let (d, m) = (p.d(), p.theta.len());
    let meter = MemoryMeter::new();
    let field = Bound::new(p.dynamics, p.theta);
    let fwd = integrate_generic(&mut PlainBackend { f: &field }, p.x0.to_vec(), p.t0, p.t1, p.tableau, p.controller, false)?;
    meter.alloc(d);

    let loss = p.loss.terminal.value(&fwd.x_final);
    let mut z = fwd.x_final.clone();
    z.extend(p.loss.terminal.gradient(&fwd.x_final));
    z.extend(std::iter::repeat_n(0.0, m));

    let backward = options.backward_controller.clone().unwrap_or_else(|| default_backward(p.controller));
    let adj = AdjointField { f: p.dynamics, theta: p.theta, meter: meter.clone(), vjps: Cell::new(0) };
    let bwd = integrate_generic(&mut PlainBackend { f: &adj }, z, p.t1, p.t0, p.tableau, &backward, options.trace_adjoint)?;
    meter.free(d);

    let trace = options.trace_adjoint.then(|| {
        let mut t: Vec<Vec<f64>> = bwd.states.iter().map(|z| z[d..2 * d].to_vec()).collect();
        t.push(bwd.x_final[d..2 * d].to_vec());
        t.reverse();
        t
    });
    let z = &bwd.x_final;
    Ok(GradientResult {
        loss,
        grad_x0: z[d..2 * d].to_vec(),
        grad_theta: z[2 * d..].to_vec(),
        accounting: AccountingReport {
            peak_retained_scalars: meter.peak(),
            nfe_forward: fwd.nfe,
            nfe_backward: bwd.nfe,
            vjp_count: adj.vjps.get(),
            steps_accepted: fwd.grid.len(),
            steps_rejected: fwd.rejected + bwd.rejected,
            steps_backward: bwd.grid.len(),
            ..Default::default()
        },
        adjoint_trace: trace,
        step_sizes: fwd.grid.iter().map(|g| g.1).collect(),
    })
}
