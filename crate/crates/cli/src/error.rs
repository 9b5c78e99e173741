use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("unknown series `{0}` (expected sep_vs_survival, absorption_pmf, spectrum, phi_profile)")]
    UnknownSeries(String),
    #[error("{stage}: {source}")]
    Module {
        stage: &'static str,
        #[source]
        source: dualchain::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{0}")]
    Unsupported(String),
    /// The dual is not a (sub)stochastic kernel; exit status 2.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A computed identity missed its tolerance.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn module(stage: &'static str, source: dualchain::Error) -> Self {
        CliError::Module { stage, source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
