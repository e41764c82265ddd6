//! Decomposed double-DQN autoscaling testbed.
//!
//! A simulated multi-tier web application ([`swimsim`]) is controlled by a
//! reward-decomposed double-DQN agent ([`agent`]). Every control step is
//! explained by Decomposed Interestingness Elements ([`dine`]): important
//! interactions, reward channel extrema (using a learned one-step dynamics
//! model, [`envmodel`]) and reward channel dominance. The [`runtime`] module
//! ties everything into a MAPE-K style control loop, persists JSONL traces and
//! streams step records to dashboard clients over a length-delimited JSON
//! socket protocol.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod dine;
pub mod envmodel;
pub mod error;
pub mod nnet;
pub mod par;
pub mod replay;
pub mod runtime;
pub mod swimsim;

pub use error::{Error, Result};
