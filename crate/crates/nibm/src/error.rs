use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}{source}")]
    Numerical { context: String, source: nibm_core::Error },
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} validation checks failed")]
    Validation(usize),
}

impl CliError {
    /// 2 for bad input, 3 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { source: nibm_core::Error::InvalidArgument(_), .. } => 2,
            CliError::Numerical { .. } | CliError::Sampling(_) => 3,
            CliError::Io(_) | CliError::Validation(_) => 1,
        }
    }
}

impl From<nibm_core::Error> for CliError {
    fn from(source: nibm_core::Error) -> Self {
        CliError::Numerical { context: String::new(), source }
    }
}

/// Attaches the offending parameters to a numerical error.
pub trait Context<T> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, nibm_core::Error> {
    fn at(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Numerical { context: format!("{}: ", context()), source })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
