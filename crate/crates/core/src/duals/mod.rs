//! Dual functions and dual kernels: `H P̂' = P H`.

pub mod exact;
mod ultrametric;

pub use ultrametric::{
    prop8_rigidity_check, ultrametric_dual, BlockCheck, RigidityReport, UltrametricDiagnostics,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{self, Kernel};
use crate::linalg;
use crate::tol::{EPS_NEG, EPS_SOLVE, EPS_STOCH, MAX_CONDITION};

#[derive(Debug, Clone, PartialEq)]
pub enum DualFamily {
    Siegmund,
    Ultrametric { k: usize, alpha: f64, beta: f64 },
    Hypergeometric,
    Vandermonde,
    Potential(DMatrix<f64>),
    Custom,
}

impl DualFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DualFamily::Siegmund => "siegmund",
            DualFamily::Ultrametric { .. } => "ultrametric",
            DualFamily::Hypergeometric => "hypergeometric",
            DualFamily::Vandermonde => "vandermonde",
            DualFamily::Potential(_) => "potential",
            DualFamily::Custom => "custom",
        }
    }
}

/// Nonnegative nontrivial `H` with its family and, when known, a
/// closed-form inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunction {
    h: DMatrix<f64>,
    family: DualFamily,
    inverse: Option<DMatrix<f64>>,
}

impl DualFunction {
    pub fn custom(h: DMatrix<f64>) -> Result<Self> {
        Self::checked(h, DualFamily::Custom, None)
    }

    fn checked(h: DMatrix<f64>, family: DualFamily, inverse: Option<DMatrix<f64>>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::NonSquare { rows: h.nrows(), cols: h.ncols() });
        }
        for ((i, j), v) in h.iter().enumerate().map(|(k, v)| ((k % h.nrows(), k / h.nrows()), v)) {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if *v < -EPS_NEG {
                return Err(Error::NegativeEntry { row: i, col: j, value: *v });
            }
        }
        let n = h.nrows();
        if let Some(i) = (0..n).find(|&i| h.row(i).iter().all(|&v| v <= 0.0)) {
            return Err(Error::PreconditionViolated(format!("row {i} of H vanishes")));
        }
        if let Some(j) = (0..n).find(|&j| h.column(j).iter().all(|&v| v <= 0.0)) {
            return Err(Error::PreconditionViolated(format!("column {j} of H vanishes")));
        }
        let h = h.map(|v| v.max(0.0));
        Ok(DualFunction { h, family, inverse })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn family(&self) -> &DualFamily {
        &self.family
    }

    pub fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// `cH`; the family tag is kept, the inverse rescaled.
    pub fn scaled(&self, c: f64) -> Self {
        DualFunction {
            h: &self.h * c,
            family: self.family.clone(),
            inverse: self.inverse.as_ref().map(|m| m / c),
        }
    }

    /// `‖H H⁻¹ − Id‖∞` for the attached inverse.
    pub fn inverse_residual(&self) -> Option<f64> {
        let n = self.n();
        self.inverse
            .as_ref()
            .map(|inv| linalg::norm_inf(&(&self.h * inv - DMatrix::identity(n, n))))
    }
}

fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Build `H` for a family on states `0..=n`.
pub fn dual_function(family: DualFamily, n: usize) -> Result<DualFunction> {
    let m = n + 1;
    match family {
        DualFamily::Siegmund => {
            let h = DMatrix::from_fn(m, m, |x, y| if x <= y { 1.0 } else { 0.0 });
            let inv = DMatrix::from_fn(m, m, |x, y| {
                if x == y {
                    1.0
                } else if x + 1 == y {
                    -1.0
                } else {
                    0.0
                }
            });
            DualFunction::checked(h, DualFamily::Siegmund, Some(inv))
        }
        DualFamily::Ultrametric { k, alpha, beta } => {
            let (h, inv) = ultrametric::h_and_inverse(n, k, alpha, beta)?;
            DualFunction::checked(h, DualFamily::Ultrametric { k, alpha, beta }, Some(inv))
        }
        DualFamily::Hypergeometric => {
            let h = DMatrix::from_fn(m, m, |x, y| choose(n - x, y) / choose(n, y));
            DualFunction::checked(h, DualFamily::Hypergeometric, None)
        }
        DualFamily::Vandermonde => {
            let h = DMatrix::from_fn(m, m, |x, y| {
                if y == 0 {
                    1.0
                } else {
                    (x as f64 / n as f64).powi(y as i32)
                }
            });
            DualFunction::checked(h, DualFamily::Vandermonde, None)
        }
        DualFamily::Potential(r) => {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::DimensionMismatch { expected: m, found: r.nrows() });
            }
            let rk = Kernel::with_demand(r.clone(), kernel::Demand::Substochastic)?;
            if !kernel::classify(&rk).stochastic.is_empty() {
                return Err(Error::PotentialHasStochasticClass);
            }
            let id_minus_r = DMatrix::identity(m, m) - rk.matrix();
            let h = linalg::inverse(&id_minus_r)?;
            DualFunction::checked(h, DualFamily::Potential(r), Some(id_minus_r))
        }
        DualFamily::Custom => Err(Error::InvalidParameter(
            "custom dual functions are built with DualFunction::custom".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Cumulative row sums increase from row `x` to `x+1` at column `y`.
    NotMonotone { x: usize, y: usize, excess: f64 },
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// A family-specific feasibility condition failed at `(x, y)`.
    Condition { name: &'static str, x: usize, y: usize },
    ResidualTooLarge { residual: f64 },
}

/// Outcome of building `P̂` from `(P, H)`.
#[derive(Debug, Clone)]
pub struct DualReport {
    /// Unclamped solution.
    pub p_hat_raw: DMatrix<f64>,
    /// Clamped kernel; `None` when infeasible.
    pub p_hat: Option<Kernel>,
    pub feasible: bool,
    /// `‖H P̂' − P H‖∞`.
    pub residual: f64,
    /// `1 − Σ_y P̂(x,y)` per state.
    pub mass_leaks: Vec<f64>,
    pub violated: Vec<Violation>,
    pub notes: Vec<String>,
    pub ultrametric: Option<UltrametricDiagnostics>,
}

impl DualReport {
    /// The dual kernel, or the error that made it infeasible.
    pub fn kernel(&self) -> Result<&Kernel> {
        if let Some(k) = &self.p_hat {
            return Ok(k);
        }
        Err(match self.violated.first() {
            Some(Violation::NotMonotone { x, y, .. }) => Error::NotMonotone { x: *x, y: *y },
            Some(Violation::NegativeEntry { row, col, value }) => Error::InfeasibleNegativeEntry {
                row: *row,
                col: *col,
                value: *value,
                condition: "negative entry".into(),
            },
            Some(Violation::Condition { name, x, y }) => {
                let value = self.p_hat_raw[(*y, *x)];
                Error::InfeasibleNegativeEntry { row: *y, col: *x, value, condition: (*name).into() }
            }
            Some(Violation::ResidualTooLarge { residual }) => {
                Error::DualityResidualTooLarge { residual: *residual }
            }
            None => Error::SingularSystem,
        })
    }

    pub fn is_substochastic(&self) -> bool {
        self.p_hat.as_ref().is_some_and(|k| k.is_substochastic())
    }

    pub fn leaking_states(&self) -> Vec<usize> {
        (0..self.mass_leaks.len()).filter(|&x| self.mass_leaks[x] > EPS_STOCH).collect()
    }

    /// Finish a report from a raw solution: clamp, collect negative
    /// entries, compute leaks and the static residual.
    pub(crate) fn finish(
        p: &Kernel,
        h: &DMatrix<f64>,
        raw: DMatrix<f64>,
        mut violated: Vec<Violation>,
    ) -> Self {
        let n = raw.nrows();
        let min_entry = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_entry < -EPS_NEG && violated.is_empty() {
            for row in 0..n {
                for col in 0..n {
                    let v = raw[(row, col)];
                    if v < -EPS_NEG {
                        violated.push(Violation::NegativeEntry { row, col, value: v });
                    }
                }
            }
        }
        let clamped = raw.map(|v| if v < 0.0 && v >= -EPS_NEG { 0.0 } else { v });
        let residual = linalg::norm_inf(&(h * clamped.transpose() - p.matrix() * h));
        if violated.is_empty() && residual > EPS_SOLVE {
            violated.push(Violation::ResidualTooLarge { residual });
        }
        let mass_leaks = (0..n).map(|x| 1.0 - clamped.row(x).sum()).collect();
        let feasible = violated.is_empty();
        let p_hat = if feasible { Kernel::new(clamped).ok() } else { None };
        DualReport {
            p_hat_raw: raw,
            feasible: p_hat.is_some(),
            p_hat,
            residual,
            mass_leaks,
            violated,
            notes: Vec::new(),
            ultrametric: None,
        }
    }
}

/// Cumulative row sums `C(x,y) = Σ_{z≤y} P(x,z)`, with an extra zero row
/// standing for `P(N+1,·) = 0`.
pub(crate) fn cumulative_rows(p: &Kernel) -> DMatrix<f64> {
    let n = p.n();
    let mut c = DMatrix::zeros(n + 1, n);
    for x in 0..n {
        // Past the last nonzero entry the cumulative is 1 exactly, so that
        // structural zeros of P̂ stay zero.
        let last = (0..n).rev().find(|&y| p.get(x, y) != 0.0).unwrap_or(0);
        let mut acc = 0.0;
        for y in 0..n {
            acc += p.get(x, y);
            c[(x, y)] = if y >= last { 1.0 } else { acc };
        }
    }
    c
}

fn monotone_violation(p: &Kernel) -> Option<(usize, usize, f64)> {
    let c = cumulative_rows(p);
    let n = p.n();
    let mut worst: Option<(usize, usize, f64)> = None;
    for x in 0..n.saturating_sub(1) {
        for y in 0..n {
            let excess = c[(x + 1, y)] - c[(x, y)];
            if excess > EPS_NEG && worst.is_none_or(|w| excess > w.2) {
                worst = Some((x, y, excess));
            }
        }
    }
    worst
}

/// Cumulative row sums nonincreasing in `x` for every `y` (slack εneg).
/// Tridiagonal inputs are also checked through `p_x + q_{x+1} ≤ 1`, and the
/// two answers must agree.
pub fn is_monotone(p: &Kernel) -> bool {
    let cumulative = monotone_violation(p).is_none();
    if p.is_tridiagonal() && p.is_stochastic() {
        let n = p.n();
        let bd = (0..n.saturating_sub(1)).all(|x| p.get(x, x + 1) + p.get(x + 1, x) <= 1.0 + EPS_NEG);
        debug_assert_eq!(bd, cumulative, "BD monotonicity and cumulative criterion disagree");
    }
    cumulative
}

/// Siegmund dual `P̂(y,x) = Σ_{z≤y} (P(x,z) − P(x+1,z))`.
pub fn siegmund_dual(p: &Kernel) -> Result<DualReport> {
    if !p.is_stochastic() {
        let s = p.row_sums();
        let row = s.iter().position(|v| (v - 1.0).abs() > EPS_STOCH).unwrap_or(0);
        return Err(Error::NotStochastic { row, sum: s[row] });
    }
    let n = p.n();
    let c = cumulative_rows(p);
    let raw = DMatrix::from_fn(n, n, |y, x| c[(x, y)] - c[(x + 1, y)]);
    let mut violated = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if raw[(y, x)] < -EPS_NEG {
                violated.push(Violation::NotMonotone { x, y, excess: -raw[(y, x)] });
            }
        }
    }
    let h = dual_function(DualFamily::Siegmund, n - 1)?;
    let mut rep = DualReport::finish(p, h.matrix(), raw, violated);
    let top = n - 1;
    rep.notes.push(format!("leak at 0: {:.17e}", 1.0 - p.get(0, 0)));
    if let Some(k) = &rep.p_hat {
        if k.is_absorbing(top) {
            rep.notes.push(format!("state {top} absorbing"));
        }
        if k.is_stochastic() {
            rep.notes.push("stochastic (P(0,0) = 1)".into());
        }
    }
    Ok(rep)
}

/// Closed form of the Siegmund dual for BD input.
pub fn siegmund_dual_bd(params: &crate::chains::BDParams) -> Result<Kernel> {
    let m = params.n + 1;
    let mut k = DMatrix::zeros(m, m);
    for x in 0..m {
        let q_next = if x + 1 < m { params.q[x + 1] } else { 0.0 };
        if x > 0 {
            k[(x, x - 1)] = params.p[x];
        }
        k[(x, x)] = 1.0 - params.p[x] - q_next;
        if x + 1 < m {
            k[(x, x + 1)] = q_next;
        }
    }
    Kernel::new(k)
}

/// Solve `H P̂' = P H` for `P̂`: substitution for (anti-)triangular `H`,
/// LU otherwise.
pub fn dual_via_solve(p: &Kernel, h: &DualFunction) -> Result<DualReport> {
    if h.n() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: h.n() });
    }
    let hm = h.matrix();
    let condition = linalg::condition_1(hm);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularH { condition });
    }
    let rhs = p.matrix() * hm;
    let x = if linalg::is_upper_triangular(hm) {
        linalg::solve_upper(hm, &rhs)?
    } else if linalg::is_anti_upper(hm) {
        linalg::solve_anti_upper(hm, &rhs)?
    } else {
        linalg::solve(hm, &rhs)?
    };
    let mut rep = DualReport::finish(p, hm, x.transpose(), Vec::new());
    rep.notes.push(format!("condition_1(H) = {condition:.3e}"));
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct DualityResidual {
    /// `‖H P̂' − P H‖∞`.
    pub static_residual: f64,
    /// `max_{n ≤ n_max} ‖Pⁿ H − H (P̂')ⁿ‖∞`.
    pub dynamic_residual: f64,
    /// `‖H' P' − P̂ H'‖∞`: `P` as the `H'`-dual of `P̂`.
    pub transposed_residual: f64,
    pub per_step: Vec<f64>,
}

impl DualityResidual {
    pub fn passes(&self, tol: f64) -> bool {
        self.static_residual <= tol && self.dynamic_residual <= tol && self.transposed_residual <= tol
    }
}

pub fn verify_duality(
    p: &Kernel,
    h: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    n_max: usize,
) -> Result<DualityResidual> {
    let n = p.n();
    for d in [h.nrows(), h.ncols(), p_hat.nrows(), p_hat.ncols()] {
        if d != n {
            return Err(Error::DimensionMismatch { expected: n, found: d });
        }
    }
    let pm = p.matrix();
    let static_residual = linalg::norm_inf(&(h * p_hat.transpose() - pm * h));
    let transposed_residual = linalg::norm_inf(&(h.transpose() * pm.transpose() - p_hat * h.transpose()));
    let pht = p_hat.transpose();
    let mut left = h.clone();
    let mut right = h.clone();
    let mut per_step = Vec::with_capacity(n_max + 1);
    per_step.push(0.0);
    for _ in 1..=n_max {
        left = pm * &left;
        right = &right * &pht;
        per_step.push(linalg::norm_inf(&(&left - &right)));
    }
    let dynamic_residual = per_step.iter().cloned().fold(0.0, f64::max);
    Ok(DualityResidual { static_residual, dynamic_residual, transposed_residual, per_step })
}

#[derive(Debug, Clone)]
pub struct PotentialReport {
    pub h: DualFunction,
    pub p_hat: DMatrix<f64>,
    pub min_entry: f64,
    /// Minimum row sum of `P̂` (the entries of `1'P̂'`).
    pub min_row_sum: f64,
    pub holds: bool,
}

/// Potential kernel `H = (Id − R)⁻¹` against the constant kernel
/// `(N+1)⁻¹ 11'`: the dual has nonnegative entries and row sums.
pub fn potential_prop3_check(r: &Kernel) -> Result<PotentialReport> {
    if r.kind() != kernel::KernelKind::StrictlySubstochastic {
        return Err(Error::PreconditionViolated("R must be strictly substochastic".into()));
    }
    if !kernel::classify(r).stochastic.is_empty() {
        return Err(Error::PreconditionViolated("R has a stochastic class".into()));
    }
    let rt = r.matrix().transpose();
    if (0..r.n()).any(|i| rt.row(i).sum() > 1.0 + EPS_STOCH) {
        return Err(Error::PreconditionViolated("R' must be substochastic".into()));
    }
    let m = r.n();
    let h = dual_function(DualFamily::Potential(r.matrix().clone()), m - 1)?;
    let p = Kernel::new(DMatrix::from_element(m, m, 1.0 / m as f64))?;
    let x = linalg::solve(h.matrix(), &(p.matrix() * h.matrix()))?;
    let p_hat = x.transpose();
    let min_entry = p_hat.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_row_sum = (0..m).map(|i| p_hat.row(i).sum()).fold(f64::INFINITY, f64::min);
    let holds = min_entry >= -EPS_NEG && min_row_sum >= -EPS_NEG;
    Ok(PotentialReport { h, p_hat, min_entry, min_row_sum, holds })
}
