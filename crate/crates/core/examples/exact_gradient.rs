//! Gradient of a neural ODE loss with every engine, compared with
//! backpropagation through the solver.

use symplectic_adjoint::engines::{compute_gradient, grad_backprop_full, Engine, EngineOptions};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::relative_linf;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let prob = builtin_problem("mlp_node")?;
    let tab = builtin_tableau("dopri5")?;
    let ctrl = StepController::adaptive(1e-8, 1e-6);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let reference = grad_backprop_full(&p)?.flat_gradient();

    println!("{:<16} {:>12} {:>6} {:>8} {:>8}", "engine", "rel. error", "N", "nfe", "peak");
    for engine in Engine::ALL {
        let r = compute_gradient(engine, &p, &EngineOptions::default())?;
        let a = &r.accounting;
        println!(
            "{:<16} {:>12.3e} {:>6} {:>8} {:>8}",
            engine.id(),
            relative_linf(&r.flat_gradient(), &reference),
            a.steps_accepted,
            a.nfe_forward + a.nfe_backward,
            a.peak_retained_scalars
        );
    }
    Ok(())
}
