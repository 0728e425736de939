//! Loss with an integral term: x(T) plus the integral of x^2 over the
//! trajectory, for the decay problem.

use symplectic_adjoint::engines::{compute_gradient, Engine, EngineOptions, GradientProblem, LossSpec, Running, Terminal};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let prob = builtin_problem("decay")?;
    let tab = builtin_tableau("dopri5")?;
    let ctrl = StepController::fixed_steps(40, prob.t0, prob.t1);
    let loss = LossSpec::terminal(Terminal::Linear(vec![1.0])).with_running(Running::SquaredNorm);
    let p = GradientProblem { loss: &loss, ..prob.gradient_problem(&prob.theta0, &tab, &ctrl) };

    // Closed form with x = e^{θt}: L = e^{θ} + (e^{2θ} - 1)/(2θ).
    let th: f64 = prob.theta0[0];
    let dl_dtheta = th.exp() + (2.0 * th * (2.0 * th).exp() - ((2.0 * th).exp() - 1.0)) / (2.0 * th * th);
    println!("closed form dL/dtheta {dl_dtheta:.10}");
    for engine in Engine::ALL {
        let r = compute_gradient(engine, &p, &EngineOptions::default())?;
        println!("{:<16} loss {:.10}  dL/dtheta {:.10}", engine.id(), r.loss, r.grad_theta[0]);
    }
    Ok(())
}
