use std::fmt;

/// CLI failure, classified for the exit code: 2 for user/input problems,
/// 1 for internal errors.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => write!(f, "{}", m),
        }
    }
}

impl From<lzsc_core::Error> for CliError {
    fn from(e: lzsc_core::Error) -> Self {
        match e {
            lzsc_core::Error::Training(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
