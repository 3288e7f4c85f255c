//! Decentralized likelihood-hysteretic implicit quantile networks for
//! cooperative multi-agent reinforcement learning.
//!
//! Modules, bottom-up:
//! - [`nn`]: layers, gradients, Adam, target synchronization.
//! - [`distribution`]: distortion operators, quantile losses, the
//!   piecewise-linear CDF and time difference likelihood (TDL).
//! - [`replay`]: concurrent experience replay trajectories.
//! - [`envs`]: meeting-in-a-grid and CMOTP benchmarks.
//! - [`agent`]: independent learners (IQN family, DQN/HDQN baselines).
//! - [`harness`]: configuration, lockstep training runs, CSV metrics.

pub mod agent;
pub mod distribution;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;

pub use error::{Error, Result};
