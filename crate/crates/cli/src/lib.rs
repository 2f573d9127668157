//! Command implementations behind the `nuwave` binary.

pub mod commands;
pub mod config;

pub use config::RunConfig;
