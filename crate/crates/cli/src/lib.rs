//! Command-line driver: config resolution, manifests and the subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
