//! Multi-player channel-selection bandit game with calibrated forecasts of
//! opponent play, its baselines, evaluation metrics and run harness.

pub mod baselines;
pub mod config;
pub mod env;
pub mod forecaster;
pub mod game;
pub mod harness;
pub mod lp;
pub mod metrics;
pub mod oracle;
pub mod profile;
pub mod rng;
pub mod special;
pub mod strategy;
