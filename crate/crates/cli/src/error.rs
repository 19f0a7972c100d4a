use std::path::{Path, PathBuf};

use ma_chansim::Error as CoreError;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// A core error caused by a bad setting rather than by the data.
    pub fn config(e: CoreError) -> Self {
        CliError::Config(e.to_string())
    }

    /// 1 for I/O and file-format problems, 2 for configuration, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::MalformedHeader { .. }
                | CoreError::Truncated { .. }
                | CoreError::DimensionMismatch { .. } => 1,
                CoreError::InvalidParameter(_)
                | CoreError::CarrierOutOfBand { .. }
                | CoreError::Configuration { .. }
                | CoreError::EmptyRegion { .. } => 2,
                _ => 3,
            },
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}
