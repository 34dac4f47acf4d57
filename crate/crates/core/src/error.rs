use thiserror::Error;

/// Errors produced by the fusion, training and imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expected a {expected:?}-domain signal, got {got:?}")]
    WrongDomain {
        expected: crate::signal::Domain,
        got: crate::signal::Domain,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty scene: at least one scatterer is required")]
    EmptyScene,

    #[error("scatterer {index} at range {range} m lies outside [0, {max}) m")]
    RangeOutOfBounds { index: usize, range: f64, max: f64 },

    #[error("matrix pencil failed: {0}")]
    Pencil(String),

    #[error("non-finite gradient in layer `{layer}` (parameter {index})")]
    NonFiniteGradient { layer: String, index: usize },

    #[error("backward called on a tape with no recorded forward pass")]
    EmptyTape,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Pencil(_) | Error::NonFiniteGradient { .. } | Error::Numeric(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
