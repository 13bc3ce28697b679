//! Adaptive event-triggered robust MPC for polytopic LPV systems with state
//! delays, actuator saturation and bounded disturbances.
//!
//! The crate is organized around the synthesis-and-simulation pipeline:
//!
//! - [`model`] — the disturbed polytopic LPV time-delay plant and its
//!   disturbance / scheduling generators.
//! - [`etm`] — the adaptive event-triggering mechanism with internal
//!   dynamic variable `beta`, plus the static baseline trigger.
//! - [`lmi`] — assembly of the four LMI families (cost decrease, state
//!   bound, saturation rows, invariance) as affine symmetric blocks over
//!   the decision variables, and controller recovery.
//! - [`sdp`] — a dense primal-dual interior-point solver for
//!   "minimize gamma subject to affine symmetric blocks PSD".
//! - [`controller`] — the closed loop: trigger, solve, hold, step.
//! - [`analysis`] — certificate and metric evaluation on recorded
//!   trajectories (Lyapunov decrease, invariant-set membership,
//!   triggering statistics, steady-state time, gain norms).
//! - [`config`] — scenario files (TOML sections `[model]`, `[cost]`,
//!   `[etm]`, `[scenario]`) with inline or CSV-referenced matrices.

// Parameter guards are written `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod controller;
pub mod etm;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod sdp;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
