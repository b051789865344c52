//! Numerical verification of minima in the classical calculus-of-variations
//! problem `∫ L(t, x, ẋ) dt → min`, `x(t₀) = x₀`, `x(t₁) = x₁`.
//!
//! The crate checks the classical necessary conditions (Euler equation in
//! integral form, Weierstrass–Erdmann corner conditions, Legendre and
//! Weierstrass conditions) and sufficient conditions built from a
//! `Q`-augmented integrand, with `Q` optionally constructed from a matrix
//! Riccati equation. All `∀`-quantified conditions are sampled on a
//! deterministic [`SamplingPlan`]; verdicts are labeled accordingly.
//!
//! The numeric kernels ([`expr`], [`trajectory`], [`quadrature`], [`ode`],
//! [`linalg`]) are generic over [`Real`] (`f32`/`f64`); the verification
//! layers use `f64` via the aliases below.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod conditions;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod ode;
pub mod pipeline;
pub mod plan;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod riccati;
pub mod scalar;
pub mod shooting;
pub mod sufficiency;
pub mod trajectory;

pub use error::{Error, EvalError, ParseError, Result};
pub use expr::{Expr, StructureClass};
pub use plan::SamplingPlan;
pub use scalar::Real;

/// Double precision second-order jet.
pub type Jet = expr::Jet2<f64>;
/// Double precision matrix.
pub type Matrix = linalg::Mat<f64>;
/// Double precision trajectory.
pub type Path = trajectory::Trajectory<f64>;
/// Double precision perturbation.
pub type Variation = trajectory::Perturbation<f64>;
/// Double precision quadrature result.
pub type Integral = quadrature::QuadratureResult<f64>;
