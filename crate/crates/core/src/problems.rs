//! Named benchmark problems, several with closed-form solutions and
//! gradients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::params_io::ParamFile;
use crate::dynamics::{Bound, Decay, Dynamics, GradientFlow, Linear, MlpDynamics, Rotation};
use crate::engines::{GradientProblem, LossSpec, Terminal};
use crate::error::{Error, Result};
use crate::ivp::{integrate, StepController};
use crate::tableau::{builtin_tableau, ButcherTableau};

pub const BUILTIN_PROBLEMS: [&str; 5] = ["decay", "rotation", "linear_nd", "mlp_node", "gradient_flow_kdv_toy"];

const LINEAR_ND_SEED: u64 = 7;
const MLP_NODE_SEED: u64 = 42;

/// Exact final state and gradients of the continuous problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub x_final: Vec<f64>,
    pub grad_x0: Vec<f64>,
    pub grad_theta: Vec<f64>,
}

pub struct Problem {
    pub name: String,
    pub dynamics: Box<dyn Dynamics>,
    pub x0: Vec<f64>,
    pub theta0: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub loss: LossSpec,
    pub oracle: Option<Oracle>,
    /// Layer widths when the dynamics is a network, empty otherwise.
    pub widths: Vec<usize>,
}

impl Problem {
    /// Binds the problem to parameters and a solver configuration.
    pub fn gradient_problem<'a>(
        &'a self,
        theta: &'a [f64],
        tableau: &'a ButcherTableau,
        controller: &'a StepController,
    ) -> GradientProblem<'a> {
        GradientProblem {
            dynamics: self.dynamics.as_ref(),
            x0: &self.x0,
            theta,
            t0: self.t0,
            t1: self.t1,
            tableau,
            controller,
            loss: &self.loss,
        }
    }

    pub fn param_file(&self, theta: &[f64]) -> ParamFile {
        ParamFile { state_dim: self.x0.len(), widths: self.widths.clone(), params: theta.to_vec() }
    }

    /// Final state from a tight dopri5 solve.
    pub fn reference_solution(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let tab = builtin_tableau("dopri5")?;
        let ctrl = StepController::adaptive(1e-12, 1e-12);
        Ok(integrate(&Bound::new(self.dynamics.as_ref(), theta), &self.x0, self.t0, self.t1, &tab, &ctrl)?.x_final)
    }
}

/// Builds a named problem with its default seed and time span.
pub fn builtin_problem(name: &str) -> Result<Problem> {
    builtin_problem_with(name, None, None)
}

/// Builds a named problem, optionally overriding the seed of its random
/// ingredients and the time span. Oracles follow the overrides.
pub fn builtin_problem_with(name: &str, seed: Option<u64>, span: Option<(f64, f64)>) -> Result<Problem> {
    let problem = match name {
        "decay" => decay(span.unwrap_or((0.0, 1.0))),
        "rotation" => rotation(span.unwrap_or((0.0, 2.0 * std::f64::consts::PI))),
        "linear_nd" => linear_nd(seed.unwrap_or(LINEAR_ND_SEED), span.unwrap_or((0.0, 1.0))),
        "mlp_node" => mlp_node(seed.unwrap_or(MLP_NODE_SEED), span.unwrap_or((0.0, 5.0)))?,
        "gradient_flow_kdv_toy" => gradient_flow(span.unwrap_or((0.0, 1.0))),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    if problem.t0 == problem.t1 || !(problem.t0.is_finite() && problem.t1.is_finite()) {
        return Err(Error::InvalidArgument("empty time span".into()));
    }
    Ok(problem)
}

/// `x' = θx`, `x0 = 1`, `θ = -1/2`, loss `x(t1)`.
fn decay((t0, t1): (f64, f64)) -> Problem {
    let (theta, x0, tau) = (-0.5, 1.0, t1 - t0);
    let growth = (theta * tau).exp();
    Problem {
        name: "decay".into(),
        dynamics: Box::new(Decay { dim: 1 }),
        x0: vec![x0],
        theta0: vec![theta],
        t0,
        t1,
        loss: LossSpec::terminal(Terminal::Linear(vec![1.0])),
        oracle: Some(Oracle { x_final: vec![x0 * growth], grad_x0: vec![growth], grad_theta: vec![x0 * tau * growth] }),
        widths: vec![],
    }
}

/// Unit-speed rotation of `(1, 0)`, loss `|x(t1) - x0|²`.
fn rotation((t0, t1): (f64, f64)) -> Problem {
    let theta = 1.0;
    let x0 = [1.0, 0.0];
    let phi = theta * (t1 - t0);
    let (s, c) = phi.sin_cos();
    // x(t) = R(φ) x0 with R = [[c, s], [-s, c]]
    let r = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
    let xv = DVector::from_column_slice(&x0);
    let xt = &r * &xv;
    let diff = &xt - &xv;
    let rm = &r - DMatrix::identity(2, 2);
    let grad_x0 = rm.transpose() * &diff * 2.0;
    // dx(t1)/dθ = (t1 - t0) f(x(t1)) / θ
    let dx_dtheta = DVector::from_column_slice(&[xt[1], -xt[0]]) * (t1 - t0);
    let grad_theta = 2.0 * diff.dot(&dx_dtheta);
    Problem {
        name: "rotation".into(),
        dynamics: Box::new(Rotation),
        x0: x0.to_vec(),
        theta0: vec![theta],
        t0,
        t1,
        loss: LossSpec::terminal(Terminal::SquaredDistance { target: x0.to_vec(), weight: 1.0 }),
        oracle: Some(Oracle {
            x_final: xt.iter().copied().collect(),
            grad_x0: grad_x0.iter().copied().collect(),
            grad_theta: vec![grad_theta],
        }),
        widths: vec![],
    }
}

/// `x' = Ax` in four dimensions with a seeded, mildly damped `A`; loss `cᵀx`.
fn linear_nd(seed: u64, (t0, t1): (f64, f64)) -> Problem {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..i {
            let w: f64 = rng.gen_range(-1.0..1.0);
            a[(i, j)] = w;
            a[(j, i)] = -w;
        }
    }
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] += 0.2 * rng.gen_range(-1.0..1.0);
        }
        a[(i, i)] -= 0.3;
    }
    let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let oracle = linear_oracle(&a, &x0, &c, t1 - t0);
    let theta: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect();
    Problem {
        name: "linear_nd".into(),
        dynamics: Box::new(Linear { dim: d }),
        x0,
        theta0: theta,
        t0,
        t1,
        loss: LossSpec::terminal(Terminal::Linear(c)),
        oracle: Some(oracle),
        widths: vec![],
    }
}

/// Closed form for `cᵀ exp(Aτ) x0`. The gradient in `A` is the upper-right
/// block of `exp([[Aᵀ, c x0ᵀ], [0, Aᵀ]] τ)`.
fn linear_oracle(a: &DMatrix<f64>, x0: &[f64], c: &[f64], tau: f64) -> Oracle {
    let d = a.nrows();
    let xv = DVector::from_column_slice(x0);
    let cv = DVector::from_column_slice(c);
    let x_final = (a * tau).exp() * &xv;
    let grad_x0 = (a.transpose() * tau).exp() * &cv;
    let mut block = DMatrix::<f64>::zeros(2 * d, 2 * d);
    let at = a.transpose();
    block.view_mut((0, 0), (d, d)).copy_from(&at);
    block.view_mut((d, d), (d, d)).copy_from(&at);
    block.view_mut((0, d), (d, d)).copy_from(&(&cv * xv.transpose()));
    let e = (block * tau).exp();
    let g = e.view((0, d), (d, d));
    let grad_theta = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| g[(i, j)]).collect();
    Oracle {
        x_final: x_final.iter().copied().collect(),
        grad_x0: grad_x0.iter().copied().collect(),
        grad_theta,
    }
}

/// Widths `[4, 16, 4]` tanh network with seeded weights over `[0, 5]` by
/// default; loss `|x(t1)|²/2`.
fn mlp_node(seed: u64, (t0, t1): (f64, f64)) -> Result<Problem> {
    let widths = vec![4, 16, 4];
    let net = MlpDynamics::new(&widths)?;
    let theta = net.init_params(seed);
    Ok(Problem {
        name: "mlp_node".into(),
        dynamics: Box::new(net),
        x0: vec![0.5, -0.3, 0.8, 0.1],
        theta0: theta,
        t0,
        t1,
        loss: LossSpec::terminal(Terminal::HalfSquaredNorm),
        oracle: None,
        widths,
    })
}

/// 16-point periodic `x' = θ G ∇H(x)` with cubic energy; loss `|x(t1)|²/2`.
fn gradient_flow((t0, t1): (f64, f64)) -> Problem {
    let d = 16;
    let x0 = (0..d)
        .map(|i| 0.5 * (1.0 + (2.0 * std::f64::consts::PI * i as f64 / d as f64).cos()))
        .collect();
    Problem {
        name: "gradient_flow_kdv_toy".into(),
        dynamics: Box::new(GradientFlow::kdv_like(d)),
        x0,
        theta0: vec![0.05],
        t0,
        t1,
        loss: LossSpec::terminal(Terminal::HalfSquaredNorm),
        oracle: None,
        widths: vec![],
    }
}

/// A parameter-fitting task: the problem's loss measures the distance to
/// targets produced by known parameters `theta_star`.
pub struct TrainingTask {
    pub problem: Problem,
    pub theta_star: Vec<f64>,
    /// Least-squares optimum in closed form, when available.
    pub regression_optimum: Option<Vec<f64>>,
}

/// The fit for `decay` uses three initial conditions, targets from
/// `θ* = -0.7` with small fixed perturbations, and starts at `θ = 0`. The
/// other problems fit a perturbed copy of their parameters back to targets
/// from the originals.
pub fn training_task(name: &str, seed: Option<u64>, span: Option<(f64, f64)>) -> Result<TrainingTask> {
    if name == "decay" {
        let (t0, t1) = span.unwrap_or((0.0, 1.0));
        if t0 == t1 || !(t0.is_finite() && t1.is_finite()) {
            return Err(Error::InvalidArgument("empty time span".into()));
        }
        return Ok(decay_fit(t0, t1));
    }
    let teacher = builtin_problem_with(name, seed, span)?;
    let theta_star = teacher.theta0.clone();
    let target = teacher.reference_solution(&theta_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0) ^ 0x5eed);
    let theta0 = theta_star.iter().map(|t| t + 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let d = target.len();
    let problem = Problem {
        theta0,
        loss: LossSpec::terminal(Terminal::SquaredDistance { target, weight: 1.0 / d as f64 }),
        oracle: None,
        ..teacher
    };
    Ok(TrainingTask { problem, theta_star, regression_optimum: None })
}

fn decay_fit(t0: f64, t1: f64) -> TrainingTask {
    let theta_star: f64 = -0.7;
    let tau = t1 - t0;
    let x0 = vec![0.5, 1.0, 1.5];
    let noise = [1e-4, -1e-4, 0.5e-4];
    let target: Vec<f64> = x0.iter().zip(noise).map(|(x, n)| x * (theta_star * tau).exp() * (1.0 + n)).collect();
    let sxy: f64 = x0.iter().zip(&target).map(|(x, y)| x * y).sum();
    let sxx: f64 = x0.iter().map(|x| x * x).sum();
    let optimum = (sxy / sxx).ln() / tau;
    let n = x0.len() as f64;
    TrainingTask {
        problem: Problem {
            name: "decay".into(),
            dynamics: Box::new(Decay { dim: 3 }),
            x0,
            theta0: vec![0.0],
            t0,
            t1,
            loss: LossSpec::terminal(Terminal::SquaredDistance { target, weight: 1.0 / n }),
            oracle: None,
            widths: vec![],
        },
        theta_star: vec![theta_star],
        regression_optimum: Some(vec![optimum]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relative_linf;

    #[test]
    fn oracles_agree_with_tight_integration() {
        for name in ["decay", "rotation", "linear_nd"] {
            let p = builtin_problem(name).unwrap();
            let x = p.reference_solution(&p.theta0).unwrap();
            let oracle = p.oracle.as_ref().unwrap();
            let err = x.iter().zip(&oracle.x_final).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{name}: {err}");
        }
    }

    #[test]
    fn decay_closed_form() {
        let p = builtin_problem("decay").unwrap();
        let o = p.oracle.unwrap();
        assert!((o.grad_theta[0] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rotation_full_turn_has_zero_gradient() {
        let p = builtin_problem("rotation").unwrap();
        let o = p.oracle.unwrap();
        assert!(relative_linf(&o.x_final, &[1.0, 0.0]) < 1e-14);
        assert!(o.grad_x0.iter().chain(&o.grad_theta).all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn energy_is_conserved_by_gradient_flow() {
        let p = builtin_problem("gradient_flow_kdv_toy").unwrap();
        let x = p.reference_solution(&p.theta0).unwrap();
        let h = GradientFlow::kdv_like(16);
        assert!((h.energy(&x) - h.energy(&p.x0)).abs() < 1e-9);
    }

    #[test]
    fn unknown_problem() {
        assert!(matches!(builtin_problem("lorenz"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn decay_fit_optimum_is_close_to_truth() {
        let task = training_task("decay", None, None).unwrap();
        let opt = task.regression_optimum.unwrap()[0];
        assert!((opt + 0.7).abs() < 1e-4);
    }
}
