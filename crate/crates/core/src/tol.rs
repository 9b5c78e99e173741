//! Global tolerances shared by every module.

/// Entries in `[-EPS_NEG, 0)` are rounding noise and get clamped to zero.
pub const EPS_NEG: f64 = 1e-12;
/// Row-sum slack for stochastic / substochastic classification.
pub const EPS_STOCH: f64 = 1e-9;
/// Residual bound for linear solves and exact identities.
pub const EPS_SOLVE: f64 = 1e-10;
/// Refuse dual solves above this 1-norm condition number.
pub const MAX_CONDITION: f64 = 1e12;
