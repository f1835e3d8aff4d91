use std::fmt;

/// Failure carrying its process exit code: 1 for model or convergence
/// failures, 2 for bad input.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn model(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Tags a library error with the stage it came from.
pub trait Stage<T> {
    fn input(self) -> Result<T, CliError>;
    fn model(self) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> Stage<T> for Result<T, E> {
    fn input(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::input(e.to_string()))
    }

    fn model(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::model(e.to_string()))
    }
}
