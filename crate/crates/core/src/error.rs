use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry {value:e} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, above 1")]
    RowSumExceedsOne { row: usize, sum: f64 },
    #[error("row {row} sums to {sum}, kernel is not stochastic")]
    NotStochastic { row: usize, sum: f64 },
    #[error("kernel is not irreducible ({classes} communicating classes)")]
    NotIrreducible { classes: usize },
    #[error("stationary mass at state {state} is not positive")]
    ZeroStationaryEntry { state: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("dual function is numerically singular (1-norm condition {condition:e})")]
    SingularH { condition: f64 },
    #[error("target set is empty")]
    EmptyTarget,
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("state {state}: p+q+r = {sum}")]
    RowSumError { state: usize, sum: f64 },
    #[error("chain is not doubly absorbing (need r_0 = r_N = 1)")]
    NotDoublyAbsorbing,
    #[error("invalid ultrametric parameters: {0}")]
    InvalidUltrametricParams(String),
    #[error("potential kernel has a stochastic class")]
    PotentialHasStochasticClass,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("duality residual {residual:e} too large")]
    DualityResidualTooLarge { residual: f64 },
    #[error("phi({state}) = {value:e} is not positive")]
    PhiNotPositive { state: usize, value: f64 },
    #[error("link row {row} sums to {sum}")]
    LinkNotStochastic { row: usize, sum: f64 },
    #[error("state {state} is not absorbing")]
    NotAbsorbing { state: usize },
    #[error("intertwining residual {residual:e} too large")]
    IntertwiningResidualTooLarge { residual: f64 },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("birth probability at state {state} is zero")]
    ZeroBirthProbability { state: usize },
    #[error("up probability at state {state} is zero")]
    ZeroUpProbability { state: usize },
    #[error("initial law is not admissible: {0}")]
    NotAdmissible(String),
    #[error("truncated tail mass {tail:e} exceeds tolerance")]
    TruncationTooCoarse { tail: f64 },
    #[error("eigenvalues too close (gap {gap:e})")]
    RepeatedEigenvalue { gap: f64 },
    #[error("stationary mass at state {state} is zero")]
    ZeroPiEntry { state: usize },
    #[error("initial pair law is not of product form (residual {residual:e})")]
    NonProductInitial { residual: f64 },
    #[error("kernel is not monotone: cumulative row sums increase at x={x}, y={y}")]
    NotMonotone { x: usize, y: usize },
    #[error("infeasible dual: entry ({row}, {col}) = {value:e} ({condition})")]
    InfeasibleNegativeEntry { row: usize, col: usize, value: f64, condition: String },
    #[error("kernel is not tridiagonal: entry ({row}, {col}) is nonzero")]
    NotTridiagonal { row: usize, col: usize },
    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
