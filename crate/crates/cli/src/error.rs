use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unknown keys, malformed values, violated invariants.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failures while computing or writing results.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
