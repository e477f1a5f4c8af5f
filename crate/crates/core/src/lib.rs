//! Simulation and inference for near-unit-root affine time series.
//!
//! The crate covers five AR(1)-type model families with affine conditional
//! moments (Poisson counts, negative-binomial counts, two gamma-Poisson
//! positive-valued families, and a Gaussian comparator), their common
//! square-root diffusion limit, least-squares and Poisson-likelihood
//! estimation of the autoregressive head `(alpha, mu)`, plug-in and
//! random-weight bootstrap inference calibrated to the near-unit-root
//! asymptotics, Monte Carlo study drivers, and a small data pipeline for
//! applying the persistence toolkit to observed series.

pub mod affine;
pub mod cir;
pub mod config;
pub mod dataio;
pub mod dd;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod montecarlo;
pub mod report;
pub mod rng;
pub mod sampling;

pub use affine::{simulate, AffineSpec, RegimeSpec, Trajectory};
pub use error::{Error, Result};
pub use estimate::{EstimateResult, Method};
