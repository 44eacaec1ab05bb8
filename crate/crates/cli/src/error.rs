use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad arguments or preconditions; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// IO or computation failure; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}
