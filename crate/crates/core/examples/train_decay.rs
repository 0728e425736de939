//! Fits the decay rate to noisy observations by gradient descent, with the
//! symplectic adjoint and with full backpropagation.

use symplectic_adjoint::engines::{train_toy, Engine, EngineOptions};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::problems::training_task;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let task = training_task("decay", None, None)?;
    let tab = builtin_tableau("dopri5")?;
    let ctrl = StepController::adaptive(1e-8, 1e-6);
    let sym = train_toy(&task.problem, Engine::Symplectic, 500, 0.1, &tab, &ctrl, &EngineOptions::default())?;
    let bp = train_toy(&task.problem, Engine::BackpropFull, 500, 0.1, &tab, &ctrl, &EngineOptions::default())?;

    for epoch in [0, 1, 10, 100, 499] {
        println!("epoch {epoch:>3}  loss {:.6e}  (backprop {:.6e})", sym.losses[epoch], bp.losses[epoch]);
    }
    println!("theta      {:.6}", sym.theta[0]);
    println!("true rate  {:.6}", task.theta_star[0]);
    if let Some(opt) = &task.regression_optimum {
        println!("optimum    {:.6}", opt[0]);
    }
    Ok(())
}
