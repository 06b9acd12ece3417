use mshc_core::analysis::AnalysisError;
use mshc_core::datasets::DatasetError;
use mshc_core::oracle::OracleError;
use mshc_core::search::SearchError;
use mshc_core::theory::TheoryError;

/// Failure classes with fixed process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 2).
    Usage(String),
    /// Candidate set shrank below K (exit 3).
    CircuitTooSmall(String),
    /// Pruning hit the iteration cap (exit 4).
    NonTermination(String),
    /// Inputs or backends disagree on the model shape (exit 5).
    TopologyMismatch(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::CircuitTooSmall(_) => 3,
            CliError::NonTermination(_) => 4,
            CliError::TopologyMismatch(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::CircuitTooSmall(m)
            | CliError::NonTermination(m)
            | CliError::TopologyMismatch(m) => f.write_str(m),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TopologyMismatch { .. } => CliError::TopologyMismatch(e.to_string()),
            OracleError::UnknownDataset(_) | OracleError::EmptyDatasetId | OracleError::InvalidSpec(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Other(other.into()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(m) => CliError::Usage(format!("invalid search config: {m}")),
            SearchError::CircuitTooSmall { .. } => CliError::CircuitTooSmall(e.to_string()),
            SearchError::NonTermination { .. } => CliError::NonTermination(e.to_string()),
            SearchError::Oracle(o) => o.into(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::TopologyMismatch { .. } => CliError::TopologyMismatch(e.to_string()),
            AnalysisError::Parameter(_) | AnalysisError::Empty => CliError::Usage(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::Parameter(_) => CliError::Usage(e.to_string()),
            TheoryError::Io(_) => CliError::Other(e.into()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidFamily(_) | DatasetError::InvalidCount => CliError::Usage(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}
