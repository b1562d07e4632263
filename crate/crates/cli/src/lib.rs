//! File formats and pipeline commands on top of `pndrecon-core`: click-table
//! synthesis, EM reconstruction, metrics and fits, trajectory simulation and
//! power sweeps.

pub mod commands;
mod error;
pub mod io;

pub use error::{CliError, ErrorReport, Result, EXIT_NUMERICAL, EXIT_VALIDATION};
