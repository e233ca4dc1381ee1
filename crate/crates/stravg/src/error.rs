use thiserror::Error;

/// Errors produced by problem construction, configuration and the analysis
/// oracles. Numerical failures inside a running solve are reported through
/// [`crate::solver::Termination::Degenerate`] instead, so that a partial
/// trace survives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("normal vector must be nonzero")]
    ZeroNormal,

    #[error("radius must be nonnegative, got {0}")]
    NegativeRadius(f64),

    #[error("relaxation parameter must be positive, got {0}")]
    InvalidRelaxation(f64),

    #[error("operator is not serializable: {0}")]
    NotSerializable(String),

    #[error("point is not a fixed point: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotFixedPoint { residual: f64, tol: f64 },

    #[error("invalid string: {0}")]
    InvalidString(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("operator index {index} out of range for {count} operators")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("extrapolation rule {rule} requires a {expected} plan step")]
    ShapeMismatch {
        rule: &'static str,
        expected: &'static str,
    },

    #[error(
        "numerically degenerate extrapolation: averaged displacement {denominator:.3e} \
         vanishes while the largest string residual is {residual:.3e}"
    )]
    DegenerateExtrapolation { denominator: f64, residual: f64 },

    #[error("relaxation parameter {lambda} outside (0, {upper}) for max string length {m}")]
    LambdaOutOfRange { lambda: f64, upper: f64, m: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("control schedule is not {s}-intermittent for any s <= period {period}")]
    NotIntermittent { period: usize, s: usize },

    #[error("empty problem: at least one operator is required")]
    EmptyProblem,

    #[error("exact distance oracle unavailable for operator {0}")]
    NoDistanceOracle(usize),

    #[error("all samples were feasible; regularity estimate undefined")]
    AllSamplesFeasible,

    #[error("inconsistent rate constants: {0}")]
    InconsistentConstants(String),

    #[error("too few usable points for a rate fit: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },

    #[error("trace does not retain iterate {0}; rerun with a finer iterate stride")]
    IterateNotRetained(usize),

    #[error("distance oracle did not converge within {0} sweeps")]
    OracleDidNotConverge(usize),

    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
