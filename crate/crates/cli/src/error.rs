use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] elastomono::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sweep infeasible at the lowest noise level eta = {eta}: M_min = {m_min} > M_max = {m_max}")]
    InfeasibleSweep { eta: f64, m_min: i64, m_max: i64 },
    #[error("internal: {0}")]
    Internal(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const RESONANCE: u8 = 3;
    pub const INFEASIBLE: u8 = 4;
    pub const INTERNAL: u8 = 5;
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use elastomono::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::InvalidArgument(_)) => exit::CONFIG,
            CliError::Core(E::Resonance { .. }) => exit::RESONANCE,
            CliError::InfeasibleSweep { .. } => exit::INFEASIBLE,
            CliError::Core(_) | CliError::Io { .. } | CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::CONFIG => "config",
            exit::RESONANCE => "resonance",
            exit::INFEASIBLE => "infeasible_sweep",
            _ => "internal",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable form of a failed run, written as `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub exit_code: u8,
    pub message: String,
}
