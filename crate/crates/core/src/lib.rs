//! Reward-driven target localization for single-object tracking.
//!
//! A tracker encodes a template crop and a search crop with a small one-stream
//! transformer, predicts one box per cell of the search feature grid, and
//! picks a cell with a learned categorical policy. The policy is trained with
//! overlap rewards after a regression warmup.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod kv;
pub mod losses;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod priors;
pub mod rl;
pub mod synthworld;
pub mod tracker;
pub mod train;

pub use error::{Error, Result};
