//! Multi-step action-value learning on mountain car.
//!
//! The crate pairs a small deep Q-network style learner (experience replay,
//! target network, centered RMSprop) with five families of n-step targets:
//! Sarsa, Tree Backup, Q(σ), Retrace and n-step Q-learning. Sarsa and Q(σ)
//! can run with or without importance-sampling corrections.
//!
//! Module map:
//! - [`env`]: deterministic mountain-car dynamics.
//! - [`valuenet`]: the 2→H→3 ReLU network, squared loss gradients, RMSprop.
//! - [`targets`]: n-step target computation for every algorithm family.
//! - [`replay`]: ring buffer with behaviour probabilities and σ per entry.
//! - [`trainer`]: the agent loop for one seeded run.
//! - [`stats`]: window means, t confidence intervals, Welch's test.
//! - [`expcli`]: sweep configuration, presets, CSV output.

pub mod env;
pub mod error;
pub mod expcli;
pub mod replay;
pub mod stats;
pub mod targets;
pub mod trainer;
pub mod valuenet;

pub use error::{Error, Result};

/// Number of discrete actions (full reverse, coast, full forward).
pub const NUM_ACTIONS: usize = 3;

/// Action values for every action in one state.
pub type ActionValues = [f64; NUM_ACTIONS];
