//! Desk-scale diffusion laboratory.
//!
//! The forward process is the Ornstein–Uhlenbeck SDE `dX = -X/2 dt + dW`,
//! whose marginal at time `t` is `X_0 e^{-t/2} + sqrt(1 - e^{-t}) N`. Models
//! approximate one of three equivalent targets:
//!
//! * the score `S(x, t) = -∇ log p(x, t)`,
//! * the noise `ε(x, t) = sqrt(1 - e^{-t}) S(x, t)`,
//! * the conditional expectation `f(x, t) = E[X_0 | X_t = x]`,
//!
//! linked by `S = (x - e^{-t/2} f) / (1 - e^{-t})`. Closed-form oracles for
//! point clouds, Gaussians, the line-embedded Gaussian and Gaussian-smoothed
//! clouds live in [`oracle`]; the backward splitting sampler in
//! [`diffusion`] accepts either an oracle or a trained [`nn::MlpModel`]
//! behind the same [`field::TimeField`] contract.

pub mod config;
pub mod diffusion;
pub mod distributions;
pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod schedule;
pub mod vector;

pub use config::{LambdaChoice, RunConfig, TargetKind};
pub use distributions::{DataDistribution, PointCloud};
pub use error::{Error, Result};
pub use field::TimeField;
pub use metrics::ErrorCurve;
pub use nn::{AdamState, MlpModel};
pub use schedule::{Schedule, StepQuantities};
pub use vector::{Batch, Vector};
