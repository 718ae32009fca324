use famrisk_core::pedigree::ValidationReport;
use thiserror::Error;

use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("username already taken")]
    DuplicateUser,
    #[error("unknown username or wrong password")]
    BadCredentials,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing or expired session")]
    Unauthorized,
    #[error("not allowed")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(String),
    #[error("revision {expected} is stale; current revision is {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("pedigree is being edited in another session")]
    Locked,
    #[error("pedigree id '{0}' already exists")]
    DuplicatePedigreeId(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("validation failed")]
    ValidationReport(ValidationReport),
    #[error("at most {limit} active runs per user")]
    QuotaExceeded { limit: usize },
    #[error("run has not finished")]
    NotReady,
    #[error("run failed: {0}")]
    RunFailed(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::DuplicateUser => "DuplicateUser",
            ServiceError::BadCredentials => "BadCredentials",
            ServiceError::InvalidRequest(_) => "InvalidRequest",
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::Forbidden => "Forbidden",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::Conflict { .. } => "Conflict",
            ServiceError::Locked => "Locked",
            ServiceError::DuplicatePedigreeId(_) => "DuplicatePedigreeId",
            ServiceError::ValidationFailed(_) | ServiceError::ValidationReport(_) => "ValidationFailed",
            ServiceError::QuotaExceeded { .. } => "QuotaExceeded",
            ServiceError::NotReady => "NotReady",
            ServiceError::RunFailed(_) => "RunFailed",
            ServiceError::Store(_) | ServiceError::Internal(_) => "Internal",
        }
    }

    pub fn message(&self) -> String {
        match self {
            ServiceError::ValidationReport(r) => r.lines().join("\n"),
            other => other.to_string(),
        }
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
