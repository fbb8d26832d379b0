//! Joint controller and output privacy filter synthesis for cloud-based
//! LQG control.
//!
//! The client keeps its state private by passing it through a linear
//! Gaussian sensor before it leaves the device; the cloud runs a Kalman
//! filter and a certainty-equivalent controller on what it receives. Privacy
//! loss is the causally conditioned directed information from the state
//! process to the disclosed outputs. The pipeline is
//!
//! 1. [`riccati::backward_riccati`] for the feedback gains,
//! 2. [`maxdet::build_problem`] and [`maxdet::solve`] for the covariance plan,
//! 3. [`synthesis::design`] for sensor matrices, noise covariances and Kalman
//!    gains.
//!
//! [`infoflow`] evaluates directed-information quantities of a design,
//! [`simulate`] runs the closed loop and [`leakage`] holds the finite-alphabet
//! log-loss toolkit.
//!
//! The crate is `no_std` and needs only `alloc`. Time indices are 0-based in
//! all containers; index `k` stores the quantity for step `t = k + 1`.

#![cfg_attr(not(test), no_std)]
// NaN must fail positivity tests, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;

pub mod infoflow;
pub mod leakage;
pub mod linalg;
pub mod maxdet;
pub mod model;
pub mod riccati;
pub mod scenario;
pub mod simulate;
pub mod synthesis;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};

/// Natural-log units to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / core::f64::consts::LN_2
}
