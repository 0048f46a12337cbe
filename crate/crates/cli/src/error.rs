use poolid::data::DataError;
use poolid::eval::EvalError;
use poolid::hyperopt::HyperoptError;
use poolid::linid::LinIdError;
use poolid::nlarx::NlarxError;
use poolid::simulator::SimError;

/// Failure classes with distinct process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => CliError::Io(io),
            DataError::Manifest(_) => CliError::Config(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Config(m),
            SimError::Guard { .. } => CliError::Numeric(e.to_string()),
            SimError::Data(d) => d.into(),
        }
    }
}

impl From<LinIdError> for CliError {
    fn from(e: LinIdError) -> Self {
        match e {
            LinIdError::Options(_) => CliError::Config(e.to_string()),
            LinIdError::TooShort(_) | LinIdError::Shape(_) | LinIdError::Format(_) => CliError::Data(e.to_string()),
            LinIdError::Io(io) => CliError::Io(io),
            e => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<NlarxError> for CliError {
    fn from(e: NlarxError) -> Self {
        match e {
            NlarxError::Config(_) => CliError::Config(e.to_string()),
            NlarxError::Diverged { .. } | NlarxError::Eval(_) => CliError::Numeric(e.to_string()),
            NlarxError::Io(io) => CliError::Io(io),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Forecast(_) => CliError::Numeric(e.to_string()),
            EvalError::Bounds { .. } | EvalError::PastTooShort { .. } => CliError::Config(e.to_string()),
            EvalError::Io(io) => CliError::Io(io),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<HyperoptError> for CliError {
    fn from(e: HyperoptError) -> Self {
        match e {
            HyperoptError::Insufficient(_) => CliError::Data(e.to_string()),
            HyperoptError::Io(io) => CliError::Io(io),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
