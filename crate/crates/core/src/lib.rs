//! NR-V2X Mode 2 sidelink simulator with NOMA/SIC reception, per-link Age of
//! Information and energy accounting, and an MPDQN agent that assigns each
//! vehicle's reservation interval and transmit power.
//!
//! The layers, bottom up:
//!
//! - [`scenario`]: ring road, placement, mobility, receiver sets.
//! - [`channel`]: path loss, shadowing, fading, OMA and SIC SINR.
//! - [`sps`]: sensing-based semi-persistent scheduling (NR Mode 2 and an
//!   LTE Mode 4 stand-in).
//! - [`kpi`]: priority queues, AoI and energy ledgers.
//! - [`env`]: the slot loop as an episodic decision process.
//! - [`mpdqn`]: the multi-pass parameterized DQN agent.
//! - [`baselines`]: random and genetic-algorithm allocators.
//! - [`expcli`]: experiment configs, sweeps, result files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod env;
pub mod error;
pub mod expcli;
pub mod kpi;
pub mod mpdqn;
pub mod rng;
pub mod scenario;
pub mod sps;
pub mod units;

pub use error::{Error, Result};
