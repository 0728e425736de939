//! Single-precision accumulation of the parameter gradient over a grid with
//! wildly varying step sizes: per-step partial sums against one running sum.

use symplectic_adjoint::bench::rounding_trial;

fn main() -> symplectic_adjoint::Result<()> {
    let trials: Vec<_> = (0..100).map(rounding_trial).collect::<Result<_, _>>()?;
    let wins = trials.iter().filter(|t| t.two_level_error < t.flat_error).count();
    let mean = |f: fn(&symplectic_adjoint::bench::RoundingTrial) -> f64| trials.iter().map(f).sum::<f64>() / 100.0;
    println!("two-level better on {wins}/100 seeds");
    println!("mean error: two-level {:.3e}, flat {:.3e}", mean(|t| t.two_level_error), mean(|t| t.flat_error));
    Ok(())
}
