use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] heatblow::Error),
}

/// Machine-readable form written to error.json.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub messages: Vec<String>,
}

impl CliError {
    pub fn record(&self) -> ErrorRecord {
        match self {
            CliError::Parse(m) => ErrorRecord {
                kind: "parse",
                messages: vec![m.clone()],
            },
            CliError::Invalid(v) => ErrorRecord {
                kind: "validation",
                messages: v.clone(),
            },
            CliError::Io(m) => ErrorRecord {
                kind: "io",
                messages: vec![m.clone()],
            },
            CliError::Core(e) => ErrorRecord {
                kind: "runtime",
                messages: vec![e.to_string()],
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
