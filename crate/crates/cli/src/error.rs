use coverless_core::image::ImageError;
use coverless_core::modeldb::DbError;
use coverless_core::protocol::ProtocolError;
use coverless_core::stegbench::StegError;
use coverless_core::train::TrainError;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] ImageError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Steg(#[from] StegError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn db_error(&self) -> Option<&DbError> {
        match self {
            Self::Db(e) | Self::Protocol(ProtocolError::Db(e)) => Some(e),
            Self::Steg(StegError::Protocol(ProtocolError::Db(e))) => Some(e),
            _ => None,
        }
    }

    /// 3 when no registered model matches, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self.db_error() {
            Some(DbError::NoMatchingModel { .. }) => 3,
            _ => 1,
        }
    }
}
