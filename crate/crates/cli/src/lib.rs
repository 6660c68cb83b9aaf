//! Batch front end for `cavspin-core`: device configuration files, trace
//! ingestion, command dispatch and JSON/CSV report emission.

pub mod commands;
pub mod config;
mod error;
pub mod report;
pub mod trace;

pub use error::CliError;
