use std::fmt;

use stork::error::StorkError;

/// A run failure, printed as one `error kind=... message=...` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: "config",
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: "io",
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "config" | "usage" | "unsupported-degree" | "dimension" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = serde_json::to_string(&self.message.replace('\n', " ")).expect("string serializes");
        write!(f, "error kind={} message={msg}", self.kind)
    }
}

impl From<StorkError> for Failure {
    fn from(e: StorkError) -> Self {
        let kind = match e {
            StorkError::Config(_) => "config",
            StorkError::Dimension { .. } => "dimension",
            StorkError::UnsupportedDegree { .. } => "unsupported-degree",
            StorkError::NonFinite { .. } => "non-finite",
            StorkError::Table(_) => "table",
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
