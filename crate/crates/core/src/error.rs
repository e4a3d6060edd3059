use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically singular (pivot ratio {ratio:.3e})")]
    Singular { ratio: f64 },

    #[error("energy {energy} is at or beyond the band edge |E| >= 2")]
    BandEdge { energy: f64 },

    #[error("degenerate frame at step {step}: AU + BV is singular")]
    DegenerateFrame { step: u64 },

    #[error("degenerate volume: Gram determinant is not positive (p = {p})")]
    DegenerateVolume { p: usize },

    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("bracket closure did not stabilize within {max_r} steps (dims {dims:?})")]
    ClosureNotStable { max_r: usize, dims: Vec<usize> },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
