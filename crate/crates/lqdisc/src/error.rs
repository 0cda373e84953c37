use thiserror::Error;

/// Errors produced by model construction, discretization and the MPC machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sample time must be positive, got {0}")]
    NonpositiveSampleTime(f64),
    #[error("time delay must be finite and nonnegative, got {0}")]
    InvalidDelay(f64),
    #[error("nonfinite value encountered in {0}")]
    Nonfinite(&'static str),
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("channel grid must be rectangular: row {row} has {found} channels, expected {expected}")]
    RaggedGrid {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("selector block {block} out of range 1..={n_blocks}")]
    SelectorOutOfRange { block: usize, n_blocks: usize },
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("stage equation system is singular (step size too large for this tableau)")]
    SingularStageSystem,
    #[error("Butcher tableau is malformed: {0}")]
    BadTableau(String),
    #[error("transfer function is improper (numerator degree exceeds denominator degree)")]
    ImproperTransferFunction,
    #[error("leading denominator coefficient must be nonzero")]
    ZeroLeadingDenominator,
    #[error("covariance matrix is not symmetric (asymmetry {0:.3e})")]
    AsymmetricCovariance(f64),
    #[error("QP bounds are infeasible at entry {0}")]
    InfeasibleBounds(usize),
    #[error("QP did not converge within {0} active-set iterations")]
    QpIterationLimit(usize),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("closed-loop simulation aborted at step {step}: {source}")]
    SimulationAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("reference trajectory has {found} entries, horizon needs {expected}")]
    ReferenceLength { expected: usize, found: usize },
    #[error("invalid {file} file: {message}")]
    FileFormat { file: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
