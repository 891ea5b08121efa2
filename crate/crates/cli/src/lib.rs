//! Library side of the `confdiag` command: configuration parsing and the
//! subcommand implementations.

pub mod commands;
pub mod config;
