use crate::accounting::AccountingReport;
use crate::error::{Error, Result};
use crate::ivp::StepController;
use crate::problems::Problem;
use crate::tableau::ButcherTableau;

use super::{compute_gradient, Engine, EngineOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    /// Loss before each update.
    pub losses: Vec<f64>,
    pub theta: Vec<f64>,
    pub reports: Vec<AccountingReport>,
}

/// Plain gradient descent on the problem's parameters, starting from
/// `problem.theta0`.
pub fn train_toy(
    problem: &Problem,
    engine: Engine,
    epochs: usize,
    lr: f64,
    tableau: &ButcherTableau,
    controller: &StepController,
    options: &EngineOptions,
) -> Result<TrainingRun> {
    if !lr.is_finite() {
        return Err(Error::InvalidArgument("learning rate must be finite".into()));
    }
    let mut theta = problem.theta0.clone();
    let mut losses = Vec::with_capacity(epochs);
    let mut reports = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let gp = problem.gradient_problem(&theta, tableau, controller);
        let result = match compute_gradient(engine, &gp, options) {
            Ok(r) => r,
            Err(Error::NonFiniteDynamics { .. }) => return Err(Error::Divergence { epoch, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !result.loss.is_finite() || result.grad_theta.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, loss: result.loss });
        }
        for (t, g) in theta.iter_mut().zip(&result.grad_theta) {
            *t -= lr * g;
        }
        losses.push(result.loss);
        reports.push(result.accounting);
    }
    Ok(TrainingRun { losses, theta, reports })
}
