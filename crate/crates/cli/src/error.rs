use std::fmt::Display;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {field}: {message} (input: {input:?})")]
    Config { field: String, input: String, message: String },
    #[error("{module}::{operation} failed: {source} (input: {input})")]
    Compute {
        module: &'static str,
        operation: &'static str,
        input: String,
        #[source]
        source: avgeom_core::Error,
    },
    #[error("non-finite result {0}")]
    NonFinite(String),
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: &str, input: impl Display, message: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), input: input.to_string(), message: message.into() }
    }

    /// 2 for bad configuration, 1 for everything that went wrong afterwards.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

/// Attaches module, operation and input to core errors.
pub trait Context<T> {
    fn within(self, module: &'static str, operation: &'static str, input: impl FnOnce() -> String) -> Result<T, CliError>;

    /// Same, but reported as a configuration problem.
    fn or_config(self, field: &str, input: impl Display) -> Result<T, CliError>;
}

impl<T> Context<T> for avgeom_core::Result<T> {
    fn within(self, module: &'static str, operation: &'static str, input: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Compute { module, operation, input: input(), source })
    }

    fn or_config(self, field: &str, input: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::config(field, input, e.to_string()))
    }
}
