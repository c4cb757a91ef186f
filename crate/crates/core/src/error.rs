use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported Clifford signature: m = {0} (supported: 1, 2, 3, 7)")]
    UnsupportedSignature(usize),

    #[error("multiplicity must be at least 1")]
    ZeroMultiplicity,

    #[error("dimension overflow: k = {multiplicity} * {base} exceeds {limit}")]
    DimensionOverflow {
        multiplicity: usize,
        base: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate vector: norm {norm:e} is not above {tol:e}")]
    DegenerateVector { norm: f64, tol: f64 },

    #[error("state undefined at infinity")]
    StateUndefinedAtInfinity,

    #[error("frame index {index} out of range (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid group point: {0}")]
    InvalidPoint(String),

    #[error("requested {requested} case but the point is in the {actual} case")]
    CaseMismatch {
        requested: &'static str,
        actual: &'static str,
    },

    #[error("degenerate {0} component; adapted basis undefined")]
    Degenerate(&'static str),

    #[error("general case requires k >= m + 1 (k = {k}, m = {m})")]
    InsufficientRank { k: usize, m: usize },

    #[error("block extraction mismatch in {what}: residual {residual:e}")]
    BlockExtractionMismatch { what: String, residual: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

pub type Result<T> = std::result::Result<T, Error>;
