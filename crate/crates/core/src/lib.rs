//! Physical-layer message authentication from OFDM channel estimates.
//!
//! Alice fits a two-component Gaussian mixture to the subcarrier magnitude
//! vectors of received messages and flags any message whose posterior
//! probability of belonging to Bob's component falls below a threshold.
//! The crate bundles a multipath channel simulator, the EM fitter, the
//! online authenticator, an MSE reference detector and an ROC harness.

pub mod auth;
pub mod baseline;
pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod gmm;

pub use error::{Error, Result};
