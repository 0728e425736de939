//! The discrete adjoint paired with the variational solution stays constant
//! along the grid.

use nalgebra::DVector;
use symplectic_adjoint::dynamics::Bound;
use symplectic_adjoint::engines::{grad_symplectic_adjoint, EngineOptions};
use symplectic_adjoint::ivp::{integrate, integrate_variational, StepController};
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let prob = builtin_problem("rotation")?;
    for name in ["heun_euler", "bosh3", "dopri5", "dopri8"] {
        let tab = builtin_tableau(name)?;
        let ctrl = StepController::fixed_steps(50, prob.t0, prob.t1);
        let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
        let options = EngineOptions { trace_adjoint: true, ..Default::default() };
        let trace = grad_symplectic_adjoint(&p, &options)?.adjoint_trace.expect("trace requested");

        let field = Bound::new(prob.dynamics.as_ref(), &prob.theta0);
        let fwd = integrate(&field, &prob.x0, prob.t0, prob.t1, &tab, &ctrl)?;
        let var = integrate_variational(prob.dynamics.as_ref(), &prob.theta0, &prob.x0, prob.t0, prob.t1, &tab, &fwd)?;
        let pair = |n: usize| var.deltas[n].transpose() * DVector::from_column_slice(&trace[n]);
        let last = pair(trace.len() - 1);
        let drift = (0..trace.len()).map(|n| (pair(n) - &last).amax()).fold(0.0, f64::max) / last.amax();
        println!("{name:<10} lambda^T delta drift {drift:.2e}");
    }
    Ok(())
}
