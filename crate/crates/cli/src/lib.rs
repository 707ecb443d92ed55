//! File formats and command-line interface for dual-wing harmonium models.

pub mod cli;
pub mod error;
pub mod formats;

pub use error::{CliError, Result};
