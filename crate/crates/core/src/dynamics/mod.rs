//! Dynamics functions `f(x, t, θ)` and their vector-Jacobian products.

pub mod analytic;
pub mod mlp;
pub mod params_io;
pub mod tape;

pub use analytic::{analytic_dynamics, Decay, GradientFlow, Linear, Rotation};
pub use mlp::MlpDynamics;
pub use tape::{Tape, Var};

use crate::accounting::MemoryMeter;
use crate::error::{check_len, Result};
use crate::ivp::VectorField;

/// Cotangents pulled back through one evaluation of `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vjp {
    /// `λᵀ ∂f/∂x`
    pub gx: Vec<f64>,
    /// `λᵀ ∂f/∂θ`
    pub gtheta: Vec<f64>,
}

/// Right-hand side of `dx/dt = f(x, t, θ)`.
///
/// Implementations must be deterministic, and `vjp` must be the exact
/// transpose-Jacobian action of `eval`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    fn eval(&self, x: &[f64], t: f64, theta: &[f64]) -> Vec<f64>;

    fn vjp(&self, x: &[f64], t: f64, theta: &[f64], cotangent: &[f64]) -> Vjp;

    /// Records the evaluation as primitive tape operations. Returning `None`
    /// makes the tape store a single node that calls back into [`Dynamics::vjp`].
    fn record_native<'a>(&'a self, _tape: &mut Tape<'a>, _x: Var, _t: f64, _theta: Var) -> Option<Var> {
        None
    }
}

pub(crate) fn check_shapes(f: &dyn Dynamics, x: &[f64], theta: &[f64]) -> Result<()> {
    check_len("state", x.len(), f.state_dim())?;
    check_len("parameters", theta.len(), f.param_dim())
}

/// A dynamics function with its parameters fixed, viewed as a vector field.
#[derive(Clone, Copy)]
pub struct Bound<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub theta: &'a [f64],
}

impl<'a> Bound<'a> {
    pub fn new(dynamics: &'a dyn Dynamics, theta: &'a [f64]) -> Self {
        Bound { dynamics, theta }
    }
}

impl VectorField for Bound<'_> {
    fn dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.dynamics.eval(x, t, self.theta)
    }
}

/// One recorded evaluation of `f`, ready for a single reverse sweep.
pub struct Recording<'a> {
    tape: Tape<'a>,
    x: Var,
    theta: Var,
    output: Var,
}

impl<'a> Recording<'a> {
    pub fn value(&self) -> &[f64] {
        self.tape.value(self.output)
    }

    pub fn live_scalar_count(&self) -> usize {
        self.tape.live_scalar_count()
    }

    /// Pulls `λ` back to `(λᵀ∂f/∂x, λᵀ∂f/∂θ)` and discards the tape.
    pub fn vjp(&mut self, lambda: &[f64]) -> Result<Vjp> {
        let mut g = self.tape.backward(self.output, lambda, &[self.x, self.theta])?;
        let gtheta = g.pop().unwrap_or_default();
        let gx = g.pop().unwrap_or_default();
        Ok(Vjp { gx, gtheta })
    }
}

/// Evaluates `f(x, t, θ)` while recording it on a fresh tape.
///
/// The input state is copied onto the tape; the parameters are borrowed.
pub fn tape_eval<'a>(
    f: &'a dyn Dynamics,
    x: &[f64],
    t: f64,
    theta: &'a [f64],
    meter: Option<MemoryMeter>,
) -> Result<Recording<'a>> {
    check_shapes(f, x, theta)?;
    let mut tape = Tape::new(meter);
    let theta_v = tape.param(theta);
    let x_v = tape.input(x);
    let output = tape.record_dynamics(f, x_v, t, theta_v);
    Ok(Recording { tape, x: x_v, theta: theta_v, output })
}

pub fn tape_vjp(recording: &mut Recording<'_>, lambda: &[f64]) -> Result<Vjp> {
    recording.vjp(lambda)
}

/// Central finite-difference check of `vjp` against `eval`.
///
/// Returns the larger of the relative errors of `gx` and `gθ` for the given
/// probe, using step `eps·(1 + |v|)` per coordinate.
pub fn vjp_fd_error(f: &dyn Dynamics, x: &[f64], t: f64, theta: &[f64], lambda: &[f64], eps: f64) -> f64 {
    let phi = |x: &[f64], th: &[f64]| crate::kernels::dot(lambda, &f.eval(x, t, th));
    let fd = |v: &[f64], perturb: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..v.len())
            .map(|k| {
                let step = eps * (1.0 + v[k].abs());
                let mut p = v.to_vec();
                p[k] = v[k] + step;
                let up = perturb(&p);
                p[k] = v[k] - step;
                let down = perturb(&p);
                (up - down) / (2.0 * step)
            })
            .collect()
    };
    let gx_fd = fd(x, &|p| phi(p, theta));
    let gt_fd = fd(theta, &|p| phi(x, p));
    let vjp = f.vjp(x, t, theta, lambda);
    let ex = crate::kernels::relative_linf(&vjp.gx, &gx_fd);
    let et = if theta.is_empty() { 0.0 } else { crate::kernels::relative_linf(&vjp.gtheta, &gt_fd) };
    ex.max(et)
}
