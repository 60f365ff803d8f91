//! Library side of the `oqkd` binary: configuration layering, subcommands
//! and artifact output.

pub mod commands;
pub mod config;
pub mod output;
