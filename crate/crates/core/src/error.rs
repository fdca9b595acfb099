use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degrees of freedom {0}: the unit-variance t needs nu > 2")]
    InvalidNu(f64),
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("tail exponent {0} gives infinite variance (needs > 3/2)")]
    InfiniteVariance(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension {0} is constant")]
    DegenerateDimension(usize),
    #[error("insufficient samples: have {have}, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("a dimension index is required for a per-dimension estimate")]
    MissingDim,
    #[error("invalid symbol batch: {0}")]
    InvalidBatch(String),
    #[error("batch is all zeros; power normalization undefined")]
    AllZeroBatch,
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("quadrature did not converge (achieved error {achieved:e})")]
    QuadratureNonconvergence { achieved: f64 },
    #[error("infeasible payload constraint: {0}")]
    InfeasibleConstraint(String),
    #[error("grid truncation: tail mass beyond grid {tail_mass:e} at Lambda {lambda}")]
    GridTruncation { tail_mass: f64, lambda: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for input/config problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleConstraint(_)
            | Error::GridTruncation { .. }
            | Error::QuadratureNonconvergence { .. }
            | Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
