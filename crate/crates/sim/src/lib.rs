//! Experiment runner, file formats and command-line interface for the
//! `prosumer-cournot` model crate.

pub mod checks;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod market_file;
pub mod outputs;
pub mod table;

pub use error::{Result, SimError};
