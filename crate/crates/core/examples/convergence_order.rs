//! Observed global order of each built-in method on logistic growth.

use symplectic_adjoint::ivp::{integrate, FnField, StepController};
use symplectic_adjoint::tableau::{builtin_tableau, BUILTIN_TABLEAUS};

fn main() -> symplectic_adjoint::Result<()> {
    let field = FnField::new(1, |x: &[f64], _t: f64| vec![x[0] * (1.0 - x[0])]);
    let exact = 1.0 / (1.0 + 9.0 * (-10f64).exp());
    for name in BUILTIN_TABLEAUS {
        let tab = builtin_tableau(name)?;
        let mut prev: Option<f64> = None;
        print!("{name:<10} order {}:", tab.order);
        for n in [10, 20, 40, 80] {
            let traj = integrate(&field, &[0.1], 0.0, 10.0, &tab, &StepController::fixed_steps(n, 0.0, 10.0))?;
            let err = (traj.x_final[0] - exact).abs();
            match prev {
                _ if err < 1e-14 => print!("  {err:.1e} (roundoff)"),
                Some(p) => print!("  {err:.1e} (slope {:.1})", (p / err).log2()),
                None => print!("  {err:.1e}"),
            }
            prev = Some(err);
        }
        println!();
    }
    Ok(())
}
