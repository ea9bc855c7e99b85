use std::path::PathBuf;
use std::process::ExitCode;

use scalesym::dynamics::DynamicsError;
use scalesym::io::IoError;
use scalesym::systems::SystemError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Input = 1,
    NotConverged = 2,
    Verification = 3,
    Dynamics = 4,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: IoError },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::System(SystemError::SymmetryFailure(_)) => Exit::Verification,
            CliError::Dynamics(
                DynamicsError::Collision { .. }
                | DynamicsError::UnresolvedEncounter { .. }
                | DynamicsError::NonFinite { .. }
                | DynamicsError::BlowUp { .. },
            ) => Exit::Dynamics,
            _ => Exit::Input,
        }
    }
}
