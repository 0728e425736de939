//! The backward sweep of the symplectic adjoint.
//!
//! Per step, from the checkpoint `x_n`: recompute the stage states, then
//! walk the stages from last to first. Each `Λ_i` needs only `λ_{n+1}` and
//! the already computed `l_j` with `j > i`, so the sweep is explicit and one
//! recorded evaluation is alive at a time.

use crate::accounting::{AccountingReport, MemoryMeter};
use crate::dynamics::{tape_eval, Bound};
use crate::error::Result;
use crate::ivp::{integrate, step_generic, PlainBackend};

use super::{EngineOptions, GradAccumulator, GradientProblem, GradientResult};

pub(crate) fn symplectic(p: &GradientProblem<'_>, options: &EngineOptions) -> Result<GradientResult> {
    let d = p.d();
    let meter = MemoryMeter::new();
    let field = Bound::new(p.dynamics, p.theta);
    let traj = integrate(&field, p.x0, p.t0, p.t1, p.tableau, p.controller)?;
    let n_steps = traj.n_steps();
    meter.alloc((n_steps + 1) * d);

    let coeffs = p.tableau.adjoint_coefficients();
    let s = coeffs.stages();
    let loss = p.loss.terminal.value(&traj.x_final);
    let mut lambda = p.loss.terminal.gradient(&traj.x_final);
    let mut grad_theta = GradAccumulator::new(p.theta.len(), options.accumulation, options.precision);
    let mut trace = vec![lambda.clone()];
    let (mut nfe_backward, mut vjps) = (0, 0);
    let mut plain = PlainBackend { f: &field };

    for rec in traj.records.iter().rev() {
        let h = rec.h;
        let st = step_generic(&mut plain, p.tableau, rec.t, h, &rec.x, None, s, false)?;
        nfe_backward += st.evals;
        let mut stage_x: Vec<Option<Vec<f64>>> = st.stages.into_iter().map(|(x, _)| Some(x)).collect();
        meter.alloc(s * d);

        let mut l: Vec<Option<Vec<f64>>> = vec![None; s];
        for i in (0..s).rev() {
            let mut acc = vec![0.0; d];
            for &(j, w) in coeffs.dependencies(i) {
                let lj = l[j].as_ref().expect("explicit sweep reads only later stages");
                let c = coeffs.tilde_b(j).resolve(h) * w;
                for (a, v) in acc.iter_mut().zip(lj) {
                    *a += c * v;
                }
            }
            let big_lambda: Vec<f64> = if coeffs.in_zero_set(i) {
                acc.iter().map(|a| -a).collect()
            } else {
                lambda.iter().zip(&acc).map(|(lam, a)| lam - h * a).collect()
            };

            let xi = stage_x[i].take().expect("each stage visited once");
            let mut recording = tape_eval(p.dynamics, &xi, rec.t + p.tableau.c[i] * h, p.theta, Some(meter.clone()))?;
            nfe_backward += 1;
            let vjp = recording.vjp(&big_lambda)?;
            vjps += 1;
            drop(recording);
            drop(xi);
            meter.free(d);

            grad_theta.add(h * coeffs.tilde_b(i).resolve(h), &vjp.gtheta);
            l[i] = Some(vjp.gx.into_iter().map(|g| -g).collect());
        }
        grad_theta.end_step();

        let mut acc = vec![0.0; d];
        for (i, li) in l.iter().enumerate() {
            let c = coeffs.tilde_b(i).resolve(h);
            for (a, v) in acc.iter_mut().zip(li.as_ref().expect("all stages swept")) {
                *a += c * v;
            }
        }
        for (lam, a) in lambda.iter_mut().zip(&acc) {
            *lam -= h * a;
        }
        trace.push(lambda.clone());
        meter.free(d);
    }
    meter.free(d);
    trace.reverse();

    Ok(GradientResult {
        loss,
        grad_x0: lambda,
        grad_theta: grad_theta.finish(),
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
