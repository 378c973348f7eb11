//! Command line, file formats and benchmarks around `spectral_rnn_core`.

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

pub use crate::error::{CliError, Result};
