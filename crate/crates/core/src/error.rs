use thiserror::Error;

/// Errors raised across the navigation toolkit.
#[derive(Debug, Error)]
pub enum NavError {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no pivot satellite available")]
    NoPivot,
    #[error("satellite mismatch: rover {rover} vs base {base}")]
    SatelliteMismatch { rover: String, base: String },
    #[error("coincident points")]
    Coincident,
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("filter divergence: {0}")]
    Divergence(String),
    #[error("attitude correction of {0:.3} rad exceeds the linearization limit")]
    LargeAttitudeCorrection(f64),
    #[error("internal solver error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NavError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        NavError::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            NavError::InvalidArgument(_)
                | NavError::Dimension(_)
                | NavError::Io(_)
                | NavError::Csv(_)
                | NavError::Json(_)
                | NavError::SatelliteMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
