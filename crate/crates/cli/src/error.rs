use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] ziegler_core::Error),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    kind: &'a str,
    exit_code: u8,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }

    /// 3 for numerical failures, 2 for everything the user can fix in the configuration.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "invalid_input",
        }
    }

    /// One-line JSON for standard error.
    pub fn to_json(&self) -> String {
        let msg = self.to_string();
        serde_json::to_string(&ErrorReport {
            error: &msg,
            kind: self.kind(),
            exit_code: self.exit_code(),
        })
        .unwrap_or_else(|_| format!("{{\"error\":{msg:?}}}"))
    }
}
