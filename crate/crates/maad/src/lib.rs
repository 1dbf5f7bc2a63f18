//! On-policy imitation learning from observations, regularized by matching
//! the action distribution inferred by a learned inverse dynamics model.
//!
//! The crate is organized around the training pipeline:
//!
//! * [`numkit`] — multilayer perceptrons with analytic gradients, Adam,
//!   global-norm gradient clipping and diagonal-Gaussian math.
//! * [`envs`] — deterministic toy continuous-control environments with
//!   analytic inverse dynamics and scripted experts.
//! * [`data`] — trajectories, expert datasets, subsampling, the FIFO replay
//!   buffer and trajectory file I/O.
//! * [`idm`] — the mixture-density inverse dynamics model, its training loop
//!   and the forward-KL regularizer against the policy.
//! * [`rewards`] — surrogate reward backends: adversarial (discriminator),
//!   trajectory matching, and entropic optimal transport.
//! * [`agent`] — Gaussian policy, value function, GAE, PPO updates, the full
//!   training loop, evaluation and R² analysis.
//! * [`oracle`] — exact tabular-MDP occupancy computations used to verify
//!   the inverse-dynamics-disagreement identities numerically.

pub mod agent;
pub mod data;
pub mod envs;
pub mod error;
pub mod idm;
pub mod numkit;
pub mod oracle;
pub mod par;
pub mod rewards;
pub mod rng;

pub use error::{Error, Result};
