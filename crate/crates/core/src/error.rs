use thiserror::Error;

pub type Result<T> = std::result::Result<T, EchoError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EchoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A frequency inside the retained band carries a weight below the
    /// regularization floor, so inverting the diagonal would amplify noise
    /// without bound.
    #[error("ill-conditioned system: weight {weight:e} at l = {ell} is below the floor {floor:e}")]
    IllConditioned { ell: i64, weight: f64, floor: f64 },

    #[error("data inconsistency: imaginary residue {residue:e} exceeds tolerance for norm {norm:e}")]
    DataInconsistency { residue: f64, norm: f64 },

    #[error("model-order mismatch: {0}")]
    ModelOrderMismatch(String),

    #[error("near-degenerate model: Vandermonde condition number {condition:e} exceeds {threshold:e}")]
    NearDegenerateModel { condition: f64, threshold: f64 },

    /// Fitted components nearly cancel one another: their energy dwarfs that
    /// of the data they reproduce.
    #[error("cancelling components: amplitude gain {gain:e} exceeds {threshold:e}")]
    CancellingComponents { gain: f64, threshold: f64 },

    #[error("inconsistent spectrum: {0}")]
    InconsistentSpectrum(String),

    #[error("wrong arity: expected {expected} cross term(s), found {found}")]
    WrongArity { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl EchoError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EchoError::InvalidArgument(msg.into())
    }
}
