//! Stochastic gradient variational Bayes for stick-breaking latent variables.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] dense matrices, seeded randomness, special functions and the
//!   finite-difference oracle used by the gradient checks.
//! * [`distributions`] fraction-level distributions: the Kumaraswamy
//!   reparameterization and its KL to a Beta, the Gamma-composition and
//!   Gauss-Logit alternatives, and the diagonal Gaussian.
//! * [`stick`] stick-breaking composition and the GEM prior.
//! * [`nn`] multilayer perceptrons with hand-written reverse mode.
//! * [`models`] Gauss VAE, SB-VAE and their semi-supervised M2 variants.
//! * [`training`] Adam, the training loop and dataset ingestion.
//! * [`evalcli`] evaluation procedures and the command-line surface.

pub mod distributions;
pub mod error;
pub mod evalcli;
pub mod models;
pub mod nn;
pub mod numerics;
pub mod stick;
pub mod training;

pub use error::{Error, Result};
