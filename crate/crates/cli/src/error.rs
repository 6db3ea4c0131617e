use mqag_core::distributions::DistributionError;
use mqag_core::harness::HarnessError;
use mqag_core::scoring::ScoringError;
use mqag_core::BackendError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Backend(_) => EXIT_BACKEND,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::InvalidRequest(m) => CliError::Usage(m),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::InvalidConfig(m) => CliError::Usage(m),
            ScoringError::Backend { .. } | ScoringError::NoQuestions(_) => CliError::Backend(e.to_string()),
            ScoringError::Contract(_) | ScoringError::Distribution(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Scoring { system_id, doc_id, source } => match CliError::from(source) {
                CliError::Backend(m) => CliError::Backend(format!("({system_id}, {doc_id}): {m}")),
                CliError::Data(m) => CliError::Data(format!("({system_id}, {doc_id}): {m}")),
                usage => usage,
            },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DistributionError> for CliError {
    fn from(e: DistributionError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
