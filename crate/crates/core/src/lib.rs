//! Bayesian stochastic-volatility models with Poisson jumps for panels of
//! daily returns, with dynamic-factor intensities, gradient-based MCMC and
//! sequential forecasting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forecast;
pub mod kernels;
pub mod mcmc;
pub mod model;
pub mod numeric;
pub mod samplers;
pub mod simulate;

pub use error::{Error, Result};

/// Random number generator used throughout; streams keep stocks independent.
pub type SvRng = rand_chacha::ChaCha8Rng;
