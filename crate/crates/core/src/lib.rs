//! Adaptive leader-following consensus for higher-order nonlinear multi-agent
//! systems over switching directed networks.
//!
//! Followers are order-`r` integrator chains with unknown parameters and a
//! disturbance driven by the leader. Each follower runs an adaptive
//! distributed observer that learns both the leader's system matrix and its
//! state through neighbor exchanges, and an adaptive tracking controller fed
//! by that estimate.
//!
//! The [`sim`] module assembles and integrates the closed loop and computes
//! diagnostics; [`sim::scenario`] holds the built-in van der Pol example.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod expr;
pub mod graph;
pub mod leader;
pub mod observer;
pub mod plant;
pub mod sim;

pub use error::{ConfigError, Error, Result};
