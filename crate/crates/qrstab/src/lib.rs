//! Toolkit for one-step integration of nonautonomous ODEs with QR-based
//! growth-rate estimation, stiffness indicators, and a solver that switches
//! between explicit and implicit Runge-Kutta methods.
//!
//! Layout:
//! - [`linalg`]: small dense QR / LU / symmetric-eigenvalue kernels
//! - [`tableaux`]: builtin Butcher tableaux and the stability function Ψ(z)
//! - [`problems`]: the benchmark ODE systems with analytic Jacobians
//! - [`stepper`]: adaptive/fixed-step integration with embedded error control
//! - [`spectral`]: discrete QR iteration, growth-rate estimates σ₁/σ_d,
//!   Steklov averages, Lyapunov and exponential-dichotomy endpoint estimates,
//!   and the stiffness indicators SI(n, w) and σ[A(t)]
//! - [`imex`]: the switching solver and its H₀ calibration
//! - [`bench`]: benchmark table harness shared by the CLI and the test suite

pub mod bench;
pub mod error;
pub mod imex;
pub mod linalg;
pub mod problems;
pub mod spectral;
pub mod stepper;
pub mod tableaux;

pub use error::{Error, Result};
