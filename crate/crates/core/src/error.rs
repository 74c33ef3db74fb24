use thiserror::Error;

/// Errors raised by kernel construction, conditioning, sampling and the
/// verification suite.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DppError {
    #[error("matrix is not Hermitian: max asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("eigenvalue {eigenvalue:.6e} lies outside [0, 1] beyond tolerance {tol:.3e}")]
    SpectrumOutOfRange { eigenvalue: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("site index {index} out of range for ground set of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("ground set is invalid: {0}")]
    InvalidGroundSet(String),

    #[error("K - K^2 is indefinite: eigenvalue {eigenvalue:.3e}")]
    SquareRootFailure { eigenvalue: f64 },

    #[error("conditioning point {0} appears more than once")]
    DuplicatePoint(usize),

    #[error("operator norm of the window compression is {norm:.6}, Neumann series not certified")]
    NotContractive { norm: f64 },

    #[error("gap probability of the window is {gap:.3e}; induced kernel undefined")]
    ZeroGapProbability { gap: f64 },

    #[error("exhaustion is not an increasing sequence of windows ending at the target window")]
    ExhaustionNotNested,

    #[error("kernel is not an orthogonal projection")]
    NotAProjection,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("ground set of size {n} exceeds the enumeration cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("enumerated probability {value:.3e} is below the round-off floor")]
    NotADistribution { value: f64 },

    #[error("conditioning event has probability {prob:.3e}")]
    ZeroProbabilityCondition { prob: f64 },

    #[error("correlation of the Palm points is {corr:.3e}")]
    ZeroCorrelation { corr: f64 },

    #[error("conditional kernel is degenerate")]
    DegenerateKernel,

    #[error("Q is not an orthogonal projection: residual {residual:.3e}")]
    InvalidProjection { residual: f64 },

    #[error("range of Q meets the window coordinates: residual {residual:.3e}")]
    RangeNotDisjoint { residual: f64 },

    #[error("windows overlap")]
    WindowsOverlap,

    #[error("window sequence is not nested: {0}")]
    NotNested(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = DppError> = std::result::Result<T, E>;
