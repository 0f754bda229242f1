use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} lies outside [0, 1]")]
    Domain { value: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("index {index} out of range for {len} eigendirections")]
    Index { index: usize, len: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{what} became non-finite at step {step} (t = {time})")]
    BlowUp { what: &'static str, step: usize, time: f64 },

    #[error("symmetric eigensolver did not converge on a {dim}x{dim} matrix (max {max_iter} sweeps, eps {eps:e})")]
    NoConvergence { dim: usize, max_iter: usize, eps: f64 },

    /// Initial value coincides with the algebraic root; the solution is the constant curve.
    #[error("degenerate closed-form branch: initial value equals algebraic root {root}")]
    DegenerateBranch { root: f64 },

    /// The Riccati equation has no quadratic term, so there is no algebraic root.
    #[error("input gain is zero; no algebraic Riccati root exists")]
    ZeroInputGain,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. } | Error::NoConvergence { .. } | Error::DegenerateBranch { .. } | Error::ZeroInputGain
        )
    }
}
