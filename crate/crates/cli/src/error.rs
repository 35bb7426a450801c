use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] svjump::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    /// 2 config, 3 data, 4 numerical, 5 io.
    pub fn exit_code(&self) -> u8 {
        use svjump::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Io { .. } | Self::Csv(_) => 5,
            Self::Core(e) => match e {
                E::Domain(_) => 2,
                E::Panel(_) | E::LengthMismatch(_) => 3,
                E::Io(_) | E::Checkpoint(_) => 5,
                E::NotPositiveDefinite { .. }
                | E::Quadrature(_)
                | E::RootFinding(_)
                | E::NonFinite { .. }
                | E::AdaptationDiverged { .. }
                | E::WeightCollapse { .. } => 4,
            },
        }
    }
}
