use thiserror::Error;

/// Errors raised by the solver, sampling, optimization and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("invalid jump model: {0}")]
    InvalidJumpModel(String),

    #[error("blow-up at step {step} (t = {time}): l2 norm {norm:e} exceeds cap {cap:e}")]
    BlowUp {
        step: usize,
        time: f64,
        norm: f64,
        cap: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidControl(_) => "invalid_control",
            Error::InvalidJumpModel(_) => "invalid_jump_model",
            Error::BlowUp { .. } => "blow_up",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
