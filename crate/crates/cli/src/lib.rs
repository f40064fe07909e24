//! Command implementations behind the `gripmap` binary.

pub mod commands;
pub mod config;
pub mod fsutil;

pub use config::RunConfig;
