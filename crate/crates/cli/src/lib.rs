//! Command-line front end: run configuration parsing and subcommands.

pub mod commands;
pub mod config;
