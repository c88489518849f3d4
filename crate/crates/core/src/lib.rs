//! Online camera-IMU temporal calibration.
//!
//! The crate bundles a ground-truth simulator ([`sim`]), a synthetic feature
//! front-end with tracking dropout ([`frontend`]), small from-scratch networks
//! that predict feature velocities and time offsets ([`nets`]), a sliding-window
//! estimator that solves for the camera-IMU offset ([`estimator`]), evaluation
//! metrics ([`metrics`]) and a config-driven experiment runner ([`cli`]).

pub mod cli;
pub mod error;
pub mod estimator;
pub mod frontend;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod nets;
pub mod numfmt;
pub mod sim;

pub use error::{Error, Result};
