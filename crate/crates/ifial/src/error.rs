use std::path::PathBuf;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ifial_core::Error> for CliError {
    fn from(e: ifial_core::Error) -> Self {
        use ifial_core::Error as E;
        let msg = e.to_string();
        match e {
            E::NonFinite(_) | E::NonFiniteActivation { .. } => CliError::Numerical(msg),
            E::Config(_) | E::MissingSpec(_) | E::Partition(_) => CliError::Config(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
