//! Configuration, fixtures, acceptance checks, output files and the CLI.

pub mod checks;
pub mod cli;
pub mod config;
pub mod output;
pub mod scenarios;
