//! Solver and verification suite for semilinear non-autonomous parabolic
//! SPDEs driven by additive or multiplicative Q-Wiener noise.
//!
//! The time stepper is the linear implicit Euler method
//! `X_{m+1} = (I + dt A(t_m))^{-1} (X_m + dt F(t_m, X_m) + B(t_m, X_m) dW_m)`
//! on top of one of two spatial backends: a cosine spectral Galerkin basis on
//! a rectangle, or P1 finite elements on a structured triangulation.
//!
//! Field arithmetic (operators, noise synthesis, stepping) is generic over
//! [`Scalar`]; the Monte Carlo harness, the exact reference solutions and the
//! dense lemma checks run in `f64`.

pub mod coeff;
pub mod dense;
pub mod error;
pub mod harness;
pub mod lemma_lab;
pub mod noise;
pub mod operators;
pub mod quadrature;
pub mod reference;
pub mod rng;
pub mod scalar;
pub mod scheme;

pub use coeff::{ScalarField, TimeFn, VectorField};
pub use error::{Error, Result};
pub use harness::{ErrorReport, ExperimentConfig, Problem};
pub use noise::{NoisePath, NoiseSpec};
pub use operators::{Backend, BoundarySpec, EdgeCondition, GridFunction, OperatorFamily, Rectangle};
pub use scalar::Scalar;
pub use scheme::{Diffusion, Drift, InitialData, SchemeConfig};

/// Operator family with `f64` field values.
pub type Family = OperatorFamily<f64>;
/// Operator family with `f32` field values.
pub type Family32 = OperatorFamily<f32>;
/// Grid function with `f64` field values.
pub type Grid = GridFunction<f64>;
/// Grid function with `f32` field values.
pub type Grid32 = GridFunction<f32>;
/// Scheme configuration with `f64` field values.
pub type Scheme = SchemeConfig<f64>;
