//! Batch black-box exploration of two-axis malaria intervention policies.

pub mod agents;
pub mod batch_runner;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod gp;
pub mod policy_space;
pub mod reward_model;
pub mod sim_env;

pub use error::{Error, ExternalSimError, Result};
