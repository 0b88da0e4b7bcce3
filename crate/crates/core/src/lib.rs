//! Simulation and drift estimation for small-noise fast-slow SDE systems.
//!
//! The library works with coupled slow/fast diffusions
//!
//! ```text
//! dX_t = c_θ(X_t, Y_t) dt + √ϵ σ(X_t, Y_t) dW_t
//! dY_t = (1/δ) f(X_t, Y_t) dt + (1/√δ) τ₁(X_t, Y_t) dW_t + (1/√δ) τ₂(X_t, Y_t) dB_t
//! ```
//!
//! where `ϵ` scales the slow-noise intensity and `δ` the timescale
//! separation, both small. It provides:
//!
//! * [`model`] — model definition, the κ weight matrix, structural validation,
//!   and a registry of built-in example systems;
//! * [`simulate`] — Euler–Maruyama path generation with reproducible,
//!   replayable noise, plus trajectory (de)serialization;
//! * [`averaging`] — ergodic invariant-measure averages of the fast process,
//!   the averaged drift, and the deterministic limit path;
//! * [`likelihood`] — the Girsanov log-likelihood, its quasi (correction-free)
//!   variant, and the deterministic limiting functional;
//! * [`estimate`] — maximum-likelihood / quasi-maximum-likelihood drift
//!   estimation, Fisher information, and normal confidence intervals.
//!
//! All numerics are generic over the scalar type through the [`Real`] trait;
//! `f64` is the intended default and the aliases at the crate root
//! ([`Model64`], [`Trajectory64`], ...) pin it.

// `!(x > 0)` style guards double as NaN checks; the clippy rewrite would
// silently accept NaN. Indexed loops are the clearer form in the small
// matrix kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod averaging;
pub mod error;
pub mod estimate;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod num;
pub mod registry;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use num::Real;

/// `f64` model.
pub type Model64 = model::MultiscaleModel<f64>;
/// `f64` noise/timescale pair.
pub type EpsilonPair64 = model::EpsilonPair<f64>;
/// `f64` trajectory.
pub type Trajectory64 = simulate::Trajectory<f64>;
/// `f64` time grid.
pub type TimeGrid64 = simulate::TimeGrid<f64>;
/// `f64` averaged limit path.
pub type LimitPath64 = averaging::LimitPath<f64>;
/// `f64` estimator result.
pub type EstimatorResult64 = estimate::EstimatorResult<f64>;
/// `f64` Fisher information.
pub type FisherInfo64 = estimate::FisherInfo<f64>;

/// `f32` model, for callers that trade precision for footprint.
pub type Model32 = model::MultiscaleModel<f32>;
/// `f32` trajectory.
pub type Trajectory32 = simulate::Trajectory<f32>;
