//! File formats, run configuration and command dispatch for the `epibranch`
//! binary.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{run, Command, Inputs, Manifest};
pub use config::RunConfig;
