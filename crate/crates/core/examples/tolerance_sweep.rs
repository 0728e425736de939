//! Gradient error against a tight reference as the solver tolerance loosens.
//! The continuous adjoint drifts; the symplectic adjoint stays exact for its
//! own grid.

use symplectic_adjoint::bench::{sweep_tolerance, write_rows_csv, SolverConfig, DEFAULT_ATOLS};
use symplectic_adjoint::engines::{grad_adjoint_continuous, grad_backprop_full, Engine};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::relative_linf;
use symplectic_adjoint::tableau::builtin_tableau;

fn main() -> symplectic_adjoint::Result<()> {
    let prob = builtin_problem("mlp_node")?;
    let tight = StepController::adaptive(1e-13, 1e-13);
    let oracle = grad_backprop_full(&prob.gradient_problem(&prob.theta0, &builtin_tableau("dopri8")?, &tight))?;

    let tab = builtin_tableau("dopri5")?;
    println!("atol      adjoint error vs tight reference");
    for atol in DEFAULT_ATOLS {
        let ctrl = StepController::adaptive(atol, 100.0 * atol);
        let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
        let g = grad_adjoint_continuous(&p, &ctrl)?;
        println!("{atol:<9.0e} {:.3e}", relative_linf(&g.flat_gradient(), &oracle.flat_gradient()));
    }

    println!("\nsweep table (grad_err against same-settings backprop):");
    let rows = sweep_tolerance(&prob, &[Engine::Adjoint, Engine::Symplectic], &DEFAULT_ATOLS, &SolverConfig::default())?;
    write_rows_csv(&rows, std::io::stdout())
}
