use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("degenerate escort parameters in state {state}: row is all zeros")]
    DegenerateParameters { state: usize },

    #[error("update rule {rule} cannot be applied to {kind} parameters")]
    IncompatibleRule { rule: String, kind: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("nothing to plot: {0}")]
    EmptyPlot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for errors caused by user-supplied configuration rather than I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            LabError::Config(_)
                | LabError::IncompatibleRule { .. }
                | LabError::InvalidMdp(_)
                | LabError::Json(_)
        )
    }
}
