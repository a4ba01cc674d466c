use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Ingest(_) | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config { key: key.to_string(), message: message.into() }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<sketchreg::Error> for CliError {
    fn from(e: sketchreg::Error) -> Self {
        use sketchreg::Error as E;
        let msg = e.to_string();
        match e {
            E::RankDeficient { .. }
            | E::NoConvergence { .. }
            | E::NonFinite
            | E::NotPowerOfTwo { .. }
            | E::ZeroVariance
            | E::SingularBlock
            | E::ConditionIvFailed { .. } => CliError::Numerical(msg),
            E::DimensionMismatch { .. }
            | E::DuplicateRowIndex(_)
            | E::NotIdentified { .. }
            | E::MissingInstruments
            | E::BadProbabilities(_) => CliError::Data(msg),
            E::OutOfDomain { .. }
            | E::MTooLarge { .. }
            | E::SketchTooSmall { .. }
            | E::ZeroEffect
            | E::BadRatio { .. }
            | E::UnsupportedScheme(_)
            | E::InvalidSpec(_) => CliError::Usage(msg),
        }
    }
}

/// CSV ingestion failures. Rows count data lines from 1 (the header is
/// row 0); columns count from 1.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError { row: usize, col: usize, message: String },
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric cell `{value}` at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, value: String },
}
