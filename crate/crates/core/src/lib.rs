//! Gaussian copula process volatility.
//!
//! Latent standard deviations `sigma(t) = g(f(t))` with `f` a Gaussian
//! process and `g` a learned monotone warp; observations are
//! `y(t) ~ N(0, sigma(t)^2)`. Inference is by a Laplace approximation or by
//! elliptical slice sampling, hyperparameters are learned by maximizing the
//! Laplace approximate marginal likelihood, and a GARCH(1,1) baseline plus a
//! rolling/expanding-window harness are provided for comparison.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod garch;
pub mod kernel;
pub mod laplace;
pub mod likelihood;
pub mod mcmc;
pub mod optim;
pub mod rng;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
