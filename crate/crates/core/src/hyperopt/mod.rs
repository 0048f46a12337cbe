//! Hyperparameter search with section-wise cross-validation.

mod cv;
mod search;
mod space;

pub use cv::{make_cv_plan, CvPlan, Fold};
pub use search::{run_search, score_trial, SearchOptions, SearchOutcome, TrialResult};
pub use space::{sample_configs, LssSpace, NlarxSpace, SearchSpace, TrialConfig};

#[derive(Debug, thiserror::Error)]
pub enum HyperoptError {
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid search: {0}")]
    Invalid(String),
    #[error("trial ledger: {0}")]
    Ledger(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HyperoptError> = std::result::Result<T, E>;
