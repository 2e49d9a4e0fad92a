//! Two-parameter flows for population-dynamics inference.
//!
//! Given unpaired sample clouds of a distribution at a handful of physics
//! times, this crate trains a sampling-time transport from a Gaussian base to
//! every marginal (conditional flow matching), synthesizes noise-coupled
//! trajectories from it, and regresses an explicit physics-time velocity
//! field that can be rolled out cheaply for new initial conditions and
//! physics parameters. Closed-form Gaussian paths, PDE residuals, and
//! Wasserstein metrics provide the validation machinery.

pub mod cfm;
pub mod config;
pub mod dataset;
pub mod datasets;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod interpolant;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod regression;

pub use error::{Error, Result};
