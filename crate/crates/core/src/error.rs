use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("wrong sector: expected {expected}, found {found}")]
    WrongSector { expected: &'static str, found: String },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("dimension {dim} exceeds the dense propagator cap of {cap}")]
    PropagatorTooLarge { dim: usize, cap: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("coordinate singularity: {0}")]
    ChartSingularity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("scenario `{scenario}` failed: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::WrongSector { .. } => "wrong_sector",
            Error::Integration { .. } => "integration",
            Error::PropagatorTooLarge { .. } => "propagator_too_large",
            Error::Quadrature(_) => "quadrature",
            Error::ChartSingularity(_) => "chart_singularity",
            Error::Config(_) => "config",
            Error::Scenario { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
