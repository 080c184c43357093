//! Library side of the `pubbias` command-line tool: CSV ingestion, the JSON
//! report document and the subcommand implementations.

pub mod commands;
pub mod input;
pub mod report;

use thiserror::Error;

/// Exit status for input and validation problems.
pub const EXIT_INPUT: i32 = 2;
/// Exit status when an optimizer did not converge (the report is still
/// written).
pub const EXIT_NONCONVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Model(#[from] pubbias::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_INPUT
    }
}
