//! Exact gradients of functions of ODE solutions.
//!
//! The crate integrates `dx/dt = f(x, t, θ)` with explicit Runge-Kutta
//! methods and differentiates the discrete solution with five engines:
//! backpropagation through the solver, two checkpointing schemes, the
//! continuous adjoint, and the symplectic adjoint, which pairs each method
//! with a backward integrator that reproduces the exact discrete gradient
//! while retaining only the step checkpoints and one evaluation's tape.

pub mod accounting;
pub mod bench;
pub mod dynamics;
pub mod engines;
pub mod error;
pub mod ivp;
pub mod problems;
pub(crate) mod kernels;
pub mod tableau;

pub use accounting::{AccountingReport, MemoryMeter};
pub use error::{Error, Result};
pub use kernels::relative_linf;
