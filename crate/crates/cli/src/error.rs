use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] reprir::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for problems with the data.
    pub fn exit_code(&self) -> i32 {
        use reprir::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::Unsupported(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn data_error(msg: impl Into<String>) -> CliError {
    CliError::Core(reprir::Error::Data(msg.into()))
}
