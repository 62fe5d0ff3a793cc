//! Parameter estimation for a discretely observed scalar diffusion
//!
//! ```text
//! dX_t = A(alpha, X_t) dt + sigma(beta, X_t) dW_t,   B = sigma^2
//! ```
//!
//! observed at a constant step `h`. The crate simulates trajectories with the
//! Milstein scheme, evaluates a Hermite-expansion quasi-likelihood and
//! conditional-least-squares objectives, minimizes them with Hooke-Jeeves
//! pattern search, refines estimates with one-step and scoring updates, and
//! runs Monte Carlo comparisons of the resulting estimators.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod hermite;
pub mod likelihood;
pub mod model;
pub mod optimize;
pub mod simulate;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{builtin_model, Mat2, ModelSpec, Theta};
pub use simulate::{SimConfig, Trajectory};
