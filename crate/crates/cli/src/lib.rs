//! Scenario files, run orchestration and output writers behind the
//! `qoshare` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use config::{load, parse, Compiled};

/// Exit codes of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
    pub const RUNTIME: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("QoS requirements cannot be supported: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => exit::VALIDATION,
            Self::Infeasible(_) => exit::INFEASIBLE,
            Self::Runtime(_) => exit::RUNTIME,
        }
    }

    /// Maps a core error raised while building or running a policy.
    pub fn from_core(e: qoshare::Error, context: &str) -> Self {
        match e {
            qoshare::Error::QosUnsupportable => Self::Infeasible(context.to_string()),
            other => Self::Runtime(anyhow::Error::new(other).context(context.to_string())),
        }
    }
}
