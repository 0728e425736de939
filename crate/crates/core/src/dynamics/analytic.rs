//! Closed-form vector fields with hand-written Jacobians.

use super::{Dynamics, Tape, Var, Vjp};
use crate::error::{Error, Result};

/// `f(x) = A x`, with `θ = A` stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub dim: usize,
}

impl Dynamics for Linear {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        self.dim * self.dim
    }

    fn eval(&self, x: &[f64], _t: f64, theta: &[f64]) -> Vec<f64> {
        crate::kernels::affine(theta, None, x, self.dim)
    }

    fn vjp(&self, x: &[f64], _t: f64, theta: &[f64], lambda: &[f64]) -> Vjp {
        let d = self.dim;
        let mut gx = vec![0.0; d];
        let mut gtheta = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                gx[c] += theta[r * d + c] * lambda[r];
                gtheta[r * d + c] = lambda[r] * x[c];
            }
        }
        Vjp { gx, gtheta }
    }

    fn record_native<'a>(&'a self, tape: &mut Tape<'a>, x: Var, _t: f64, theta: Var) -> Option<Var> {
        Some(tape.affine(theta, 0, None, x, self.dim))
    }
}

/// `f(x) = θ₀ x` applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decay {
    pub dim: usize,
}

impl Dynamics for Decay {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], _t: f64, theta: &[f64]) -> Vec<f64> {
        x.iter().map(|v| theta[0] * v).collect()
    }

    fn vjp(&self, x: &[f64], _t: f64, theta: &[f64], lambda: &[f64]) -> Vjp {
        Vjp {
            gx: lambda.iter().map(|l| theta[0] * l).collect(),
            gtheta: vec![crate::kernels::dot(lambda, x)],
        }
    }
}

/// `f(x) = θ₀ (x₁, -x₀)`: rotation with angular speed `θ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rotation;

impl Dynamics for Rotation {
    fn state_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], _t: f64, theta: &[f64]) -> Vec<f64> {
        vec![theta[0] * x[1], -theta[0] * x[0]]
    }

    fn vjp(&self, x: &[f64], _t: f64, theta: &[f64], lambda: &[f64]) -> Vjp {
        Vjp {
            gx: vec![-theta[0] * lambda[1], theta[0] * lambda[0]],
            gtheta: vec![lambda[0] * x[1] - lambda[1] * x[0]],
        }
    }
}

/// `f(x) = θ₀ G ∇H(x)` on a periodic grid, with `G` the skew-symmetric
/// central difference `(Gv)_i = (v_{i+1} - v_{i-1}) / (2Δ)`.
///
/// With `cubic` the energy is `H = Σ (x²/2 - x³/6)`, otherwise `H = Σ x²/2`.
/// Skew `G` makes `H` a first integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientFlow {
    pub dim: usize,
    pub spacing: f64,
    pub cubic: bool,
}

impl GradientFlow {
    /// Cubic energy on a unit-length periodic domain.
    pub fn kdv_like(dim: usize) -> Self {
        GradientFlow { dim, spacing: 1.0 / dim as f64, cubic: true }
    }

    pub fn quadratic(dim: usize) -> Self {
        GradientFlow { dim, spacing: 1.0 / dim as f64, cubic: false }
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|v| if self.cubic { 0.5 * v * v - v * v * v / 6.0 } else { 0.5 * v * v })
            .sum()
    }

    fn grad_h(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| if self.cubic { v - 0.5 * v * v } else { *v }).collect()
    }

    fn apply_g(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * self.spacing))
            .collect()
    }
}

impl Dynamics for GradientFlow {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], _t: f64, theta: &[f64]) -> Vec<f64> {
        self.apply_g(&self.grad_h(x)).into_iter().map(|v| theta[0] * v).collect()
    }

    fn vjp(&self, x: &[f64], _t: f64, theta: &[f64], lambda: &[f64]) -> Vjp {
        // Gᵀ = -G; the Hessian of H is diag(1 - x) (cubic) or I.
        let gt_lambda: Vec<f64> = self.apply_g(lambda).into_iter().map(|v| -v).collect();
        let gx = gt_lambda
            .iter()
            .zip(x)
            .map(|(g, v)| theta[0] * g * if self.cubic { 1.0 - v } else { 1.0 })
            .collect();
        let gtheta = vec![crate::kernels::dot(lambda, &self.apply_g(&self.grad_h(x)))];
        Vjp { gx, gtheta }
    }
}

/// Builds one of the closed-form fields by name: `linear`, `decay`,
/// `rotation` (always 2-D) or `gradient_flow` (cubic energy).
pub fn analytic_dynamics(kind: &str, dim: usize) -> Result<Box<dyn Dynamics>> {
    if dim == 0 {
        return Err(Error::Shape("dimension must be positive".into()));
    }
    Ok(match kind {
        "linear" => Box::new(Linear { dim }),
        "decay" => Box::new(Decay { dim }),
        "rotation" => Box::new(Rotation),
        "gradient_flow" => Box::new(GradientFlow::kdv_like(dim)),
        other => return Err(Error::UnknownProblem(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{tape_eval, vjp_fd_error};

    #[test]
    fn linear_vjp_is_transpose() {
        let a = [0.0, 1.0, -1.0, 0.0];
        let f = Linear { dim: 2 };
        let v = f.vjp(&[0.3, 0.4], 0.0, &a, &[2.0, 5.0]);
        assert_eq!(v.gx, vec![-5.0, 2.0]);
        let mut rec = tape_eval(&f, &[0.3, 0.4], 0.0, &a, None).unwrap();
        assert_eq!(rec.vjp(&[2.0, 5.0]).unwrap().gx, vec![-5.0, 2.0]);
    }

    #[test]
    fn decay_parameter_gradient_is_lambda_x() {
        let v = Decay { dim: 1 }.vjp(&[3.0], 0.0, &[-0.5], &[2.0]);
        assert_eq!(v.gtheta, vec![6.0]);
        assert_eq!(v.gx, vec![-1.0]);
    }

    #[test]
    fn zero_cotangent_gives_zero() {
        let f = Rotation;
        let v = f.vjp(&[1.0, 2.0], 0.0, &[1.5], &[0.0, 0.0]);
        assert!(v.gx.iter().chain(&v.gtheta).all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_flow_vjp_matches_finite_differences() {
        for f in [GradientFlow::quadratic(8), GradientFlow::kdv_like(8)] {
            let x: Vec<f64> = (0..8).map(|i| 0.4 * (i as f64 * 0.9).sin()).collect();
            let lambda: Vec<f64> = (0..8).map(|i| (i as f64 * 1.7).cos()).collect();
            let err = vjp_fd_error(&f, &x, 0.0, &[0.8], &lambda, 1e-6);
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn skew_structure_conserves_energy_rate() {
        let f = GradientFlow::kdv_like(16);
        let x: Vec<f64> = (0..16).map(|i| 0.5 + 0.3 * (i as f64).sin()).collect();
        let rate = crate::kernels::dot(&f.grad_h(&x), &f.eval(&x, 0.0, &[1.0]));
        assert!(rate.abs() < 1e-12, "{rate}");
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(analytic_dynamics("lorenz", 3), Err(Error::UnknownProblem(_))));
    }
}
