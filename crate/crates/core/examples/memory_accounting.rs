//! Peak retained scalars per engine on a fixed 64-step grid, next to the
//! cost model, and how the gap to per-step checkpointing grows with stages.

use symplectic_adjoint::engines::{compute_gradient, Engine, EngineOptions};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let prob = builtin_problem("mlp_node")?;
    let n = 64;
    let d = prob.x0.len();
    for name in ["bosh3", "dopri5", "dopri8"] {
        let tab = builtin_tableau(name)?;
        let ctrl = StepController::fixed_steps(n, prob.t0, prob.t1);
        let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
        println!("{name}");
        for engine in Engine::ALL {
            let a = compute_gradient(engine, &p, &EngineOptions::default())?.accounting;
            let (s, l) = (a.stages, a.tape_scalars_per_eval);
            let model = match engine {
                Engine::Symplectic => Some((n + s) * d + l),
                Engine::StepCheckpoint => Some(n * d + s * l),
                Engine::BackpropFull => Some(n * s * l),
                Engine::Baseline => Some(n * s * l + d),
                Engine::Adjoint => None,
            };
            let model = model.map_or("-".to_string(), |m| m.to_string());
            println!("  {:<16} peak {:>6}  model {:>6}", engine.id(), a.peak_retained_scalars, model);
        }
    }
    Ok(())
}
