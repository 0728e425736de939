use std::sync::Arc;

use crate::kernels::dot;

/// A scalar function of the final state.
pub trait TerminalLoss: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// An integrand `ℓ(x, t)` accumulated over the trajectory.
pub trait RunningCost: Send + Sync {
    fn value(&self, x: &[f64], t: f64) -> f64;
    fn gradient(&self, x: &[f64], t: f64) -> Vec<f64>;
}

/// Built-in terminal losses.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    /// `cᵀx`
    Linear(Vec<f64>),
    /// `w·|x - target|²`
    SquaredDistance { target: Vec<f64>, weight: f64 },
    /// `|x|²/2`
    HalfSquaredNorm,
    Constant(f64),
}

impl TerminalLoss for Terminal {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Terminal::Linear(c) => dot(c, x),
            Terminal::SquaredDistance { target, weight } => {
                weight * x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            Terminal::HalfSquaredNorm => 0.5 * dot(x, x),
            Terminal::Constant(v) => *v,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Terminal::Linear(c) => c.clone(),
            Terminal::SquaredDistance { target, weight } => {
                x.iter().zip(target).map(|(a, b)| 2.0 * weight * (a - b)).collect()
            }
            Terminal::HalfSquaredNorm => x.to_vec(),
            Terminal::Constant(_) => vec![0.0; x.len()],
        }
    }
}

/// Built-in running costs.
#[derive(Debug, Clone, PartialEq)]
pub enum Running {
    /// `cᵀx`
    Linear(Vec<f64>),
    /// `|x|²`
    SquaredNorm,
}

impl RunningCost for Running {
    fn value(&self, x: &[f64], _t: f64) -> f64 {
        match self {
            Running::Linear(c) => dot(c, x),
            Running::SquaredNorm => dot(x, x),
        }
    }

    fn gradient(&self, x: &[f64], _t: f64) -> Vec<f64> {
        match self {
            Running::Linear(c) => c.clone(),
            Running::SquaredNorm => x.iter().map(|v| 2.0 * v).collect(),
        }
    }
}

/// `L(x(t1)) + ∫ ℓ(x, t) dt`, the integral being optional.
#[derive(Clone)]
pub struct LossSpec {
    pub terminal: Arc<dyn TerminalLoss>,
    pub running: Option<Arc<dyn RunningCost>>,
}

impl LossSpec {
    pub fn terminal(loss: impl TerminalLoss + 'static) -> Self {
        LossSpec { terminal: Arc::new(loss), running: None }
    }

    pub fn with_running(mut self, cost: impl RunningCost + 'static) -> Self {
        self.running = Some(Arc::new(cost));
        self
    }
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec").field("running", &self.running.is_some()).finish_non_exhaustive()
    }
}
