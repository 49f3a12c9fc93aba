//! Library surface of the `ifr` command-line tool: dataset ingestion,
//! subcommand implementations, and report serialization. The binary in
//! `main.rs` is a thin argument-parsing wrapper around this crate.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod report;
