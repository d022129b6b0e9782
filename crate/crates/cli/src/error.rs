use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("registration failed: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] indireg::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for I/O, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(e) => match e {
                indireg::Error::Config(_) | indireg::Error::GridMismatch(_) => 2,
                indireg::Error::Io(_) | indireg::Error::Format(_) => 3,
                indireg::Error::Numerical(_) => 4,
                _ => 1,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
