//! Config-driven experiment runner for `contiqa`.

pub mod commands;
pub mod config;
pub mod plot;

pub use config::{DataSource, RunConfig};
