//! Running costs folded into the state as a quadrature coordinate
//! `c' = ℓ(x, t)`, `c(t0) = 0`; the loss becomes `L(x(t1)) + c(t1)`.

use std::sync::Arc;

use crate::dynamics::{Dynamics, Vjp};
use crate::error::Result;

use super::loss::{LossSpec, RunningCost, TerminalLoss};
use super::{compute_gradient, Engine, EngineOptions, GradientProblem, GradientResult};

struct WithQuadrature<'a> {
    inner: &'a dyn Dynamics,
    cost: Arc<dyn RunningCost>,
}

impl Dynamics for WithQuadrature<'_> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() + 1
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn eval(&self, x: &[f64], t: f64, theta: &[f64]) -> Vec<f64> {
        let d = self.inner.state_dim();
        let mut out = self.inner.eval(&x[..d], t, theta);
        out.push(self.cost.value(&x[..d], t));
        out
    }

    fn vjp(&self, x: &[f64], t: f64, theta: &[f64], lambda: &[f64]) -> Vjp {
        let d = self.inner.state_dim();
        let mut v = self.inner.vjp(&x[..d], t, theta, &lambda[..d]);
        let lc = lambda[d];
        if lc != 0.0 {
            for (g, dl) in v.gx.iter_mut().zip(self.cost.gradient(&x[..d], t)) {
                *g += lc * dl;
            }
        }
        v.gx.push(0.0);
        v
    }
}

struct PlusQuadrature(Arc<dyn TerminalLoss>);

impl TerminalLoss for PlusQuadrature {
    fn value(&self, x: &[f64]) -> f64 {
        let d = x.len() - 1;
        self.0.value(&x[..d]) + x[d]
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() - 1;
        let mut g = self.0.gradient(&x[..d]);
        g.push(1.0);
        g
    }
}

pub(crate) fn fold(engine: Engine, p: &GradientProblem<'_>, options: &EngineOptions) -> Result<GradientResult> {
    let cost = p.loss.running.clone().expect("called with a running cost");
    let dynamics = WithQuadrature { inner: p.dynamics, cost };
    let loss = LossSpec { terminal: Arc::new(PlusQuadrature(p.loss.terminal.clone())), running: None };
    let mut x0 = p.x0.to_vec();
    x0.push(0.0);
    let augmented = GradientProblem { dynamics: &dynamics, x0: &x0, loss: &loss, ..*p };
    let mut result = compute_gradient(engine, &augmented, options)?;
    let d = p.d();
    result.grad_x0.truncate(d);
    if let Some(trace) = &mut result.adjoint_trace {
        for lam in trace {
            lam.truncate(d);
        }
    }
    Ok(result)
}
