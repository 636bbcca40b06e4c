//! In-context reinforcement learning by prompting: an LLM retries one task
//! with its past attempts and their rewards in context.

pub mod baselines;
pub mod config;
pub mod experiment;
pub mod game24;
pub mod icrl;
pub mod metrics;
pub mod policy;
pub mod task;
pub mod textworld;
pub mod writing;
