//! Generalized ultrametric dual `H_{α,β}` with blocks `C = {0..k}` and
//! `C' = {k+1..N}`.

use nalgebra::DMatrix;

use super::{cumulative_rows, dual_function, DualFamily, DualReport, Violation};
use crate::chains::BDParams;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::tol::{EPS_NEG, EPS_SOLVE, EPS_STOCH};

pub(super) fn h_and_inverse(
    n: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_params(n, k, alpha, beta)?;
    let m = n + 1;
    let gamma = |x: usize| if x <= k { alpha } else { beta };
    let same = |x: usize, y: usize| (x <= k) == (y <= k);
    let h = DMatrix::from_fn(m, m, |x, y| {
        if x > y {
            0.0
        } else if same(x, y) {
            1.0 + gamma(x)
        } else {
            1.0
        }
    });
    // The superdiagonal entry at the block boundary picks up an extra
    // factor 1/(1+β).
    let inv = DMatrix::from_fn(m, m, |x, y| {
        if x == y {
            1.0 / (1.0 + gamma(x))
        } else if x + 1 == y && x == k {
            -1.0 / ((1.0 + alpha) * (1.0 + beta))
        } else if x + 1 == y {
            -1.0 / (1.0 + gamma(x))
        } else {
            0.0
        }
    });
    Ok((h, inv))
}

fn check_params(n: usize, k: usize, alpha: f64, beta: f64) -> Result<()> {
    if k >= n {
        return Err(Error::InvalidUltrametricParams(format!("need 0 <= k < N, got k={k}, N={n}")));
    }
    if !(alpha.is_finite() && beta.is_finite()) || alpha < 0.0 || beta < 0.0 {
        return Err(Error::InvalidUltrametricParams(format!(
            "need alpha, beta >= 0, got {alpha}, {beta}"
        )));
    }
    Ok(())
}

/// Sufficient block conditions for a nonnegative ultrametric dual, and the
/// critical block mass for substochasticity.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    /// Common value of `Σ_{z≤k} P(x,z)` when it is the same for all `x`.
    pub block_mass: Option<f64>,
    /// `Σ_{z≤y} P(x,z)` nonincreasing in `x ∈ C` for `y ≤ k`.
    pub c_block_decreasing: bool,
    /// `Σ_{k<z≤y} P(x,z)` nonincreasing in `x ∈ C'` for `y > k`.
    pub c_prime_block_decreasing: bool,
    pub sufficient: bool,
    /// `(1+β)/(1+α+β)`.
    pub critical_delta: f64,
    pub at_critical_delta: bool,
}

#[derive(Debug, Clone)]
pub struct UltrametricDiagnostics {
    /// Row masses `L(y)` from the closed block formulas.
    pub row_mass_formula: Vec<f64>,
    pub row_mass_actual: Vec<f64>,
    pub block_check: BlockCheck,
    /// Rows with mass within 1e-10 of one.
    pub conservative_rows: Vec<usize>,
}

pub fn ultrametric_dual(p: &Kernel, k: usize, alpha: f64, beta: f64) -> Result<DualReport> {
    if !p.is_stochastic() {
        let s = p.row_sums();
        let row = s.iter().position(|v| (v - 1.0).abs() > EPS_STOCH).unwrap_or(0);
        return Err(Error::NotStochastic { row, sum: s[row] });
    }
    let n = p.top();
    check_params(n, k, alpha, beta)?;
    let m = n + 1;
    let c = cumulative_rows(p);
    let gamma = |x: usize| if x <= k { alpha } else { beta };

    let raw = DMatrix::from_fn(m, m, |y, x| {
        if x != k {
            let s = |yy: usize| c[(x, yy)] - c[(x + 1, yy)];
            if y <= k {
                (1.0 + alpha) / (1.0 + gamma(x)) * s(y)
            } else {
                (s(k) + (1.0 + beta) * (s(y) - s(k))) / (1.0 + gamma(x))
            }
        } else {
            let d = |yy: usize| c[(k, yy)] - c[(k + 1, yy)] / (1.0 + beta);
            if y <= k {
                d(y)
            } else {
                (d(k) + (1.0 + beta) * (d(y) - d(k))) / (1.0 + alpha)
            }
        }
    });

    let mut violated = Vec::new();
    for x in (0..m).filter(|&x| x != k) {
        for y in 0..m {
            let ok = if y <= k {
                c[(x + 1, y)] <= c[(x, y)] + EPS_NEG
            } else {
                let w = |r: usize| c[(r, k)] + (1.0 + beta) * (c[(r, y)] - c[(r, k)]);
                w(x + 1) <= w(x) + EPS_NEG
            };
            if !ok {
                let name = if y <= k { "cumulative order" } else { "weighted cumulative order" };
                violated.push(Violation::Condition { name, x, y });
            }
        }
    }
    // The conditions above cover every entry; any remaining negative entry
    // is reported by `finish`.
    let h = dual_function(DualFamily::Ultrametric { k, alpha, beta }, n)?;
    let mut rep = DualReport::finish(p, h.matrix(), raw, violated);

    let row_mass_formula: Vec<f64> = (0..m)
        .map(|y| {
            if y <= k {
                c[(0, y)] + alpha / (1.0 + beta) * c[(k + 1, y)]
            } else {
                c[(0, k)] / (1.0 + alpha)
                    + (1.0 + beta) / (1.0 + alpha) * (c[(0, y)] - c[(0, k)])
                    + alpha / ((1.0 + alpha) * (1.0 + beta)) * c[(k + 1, k)]
                    + alpha / (1.0 + alpha) * (c[(k + 1, y)] - c[(k + 1, k)])
            }
        })
        .collect();
    let row_mass_actual: Vec<f64> = (0..m).map(|y| rep.p_hat_raw.row(y).sum()).collect();
    let conservative_rows = (0..m).filter(|&y| (row_mass_actual[y] - 1.0).abs() <= EPS_SOLVE).collect();

    let masses: Vec<f64> = (0..m).map(|x| c[(x, k)]).collect();
    let block_mass = if masses.iter().all(|v| (v - masses[0]).abs() <= 1e-12) && masses[0] > 0.0 && masses[0] < 1.0 {
        Some(masses[0])
    } else {
        None
    };
    let c_block_decreasing = (0..=k).all(|y| (0..k).all(|x| c[(x + 1, y)] <= c[(x, y)] + EPS_NEG));
    let c_prime_block_decreasing = (k + 1..m).all(|y| {
        (k + 1..n).all(|x| c[(x + 1, y)] - c[(x + 1, k)] <= c[(x, y)] - c[(x, k)] + EPS_NEG)
    });
    let critical_delta = (1.0 + beta) / (1.0 + alpha + beta);
    let block_check = BlockCheck {
        block_mass,
        c_block_decreasing,
        c_prime_block_decreasing,
        sufficient: block_mass.is_some() && c_block_decreasing && c_prime_block_decreasing,
        critical_delta,
        at_critical_delta: block_mass.is_some_and(|d| (d - critical_delta).abs() <= 1e-12),
    };
    rep.ultrametric = Some(UltrametricDiagnostics {
        row_mass_formula,
        row_mass_actual,
        block_check,
        conservative_rows,
    });
    Ok(rep)
}

/// Rigidity of ultrametric duals for irreducible BD chains.
#[derive(Debug, Clone)]
pub struct RigidityReport {
    pub report: DualReport,
    pub feasible: bool,
    pub substochastic: bool,
    pub stochastic: bool,
    pub monotone: bool,
    pub row_sums: Vec<f64>,
    pub leaking_states: Vec<usize>,
    /// `(1 − p_0)/q_1`, the stated critical `α` for `k = 0`.
    pub alpha_threshold_stated: f64,
    /// `p_0/q_1`, the `α` at which row 0 of `P̂` is conservative.
    pub alpha_threshold_row0: f64,
    /// Raw `P̂(k+2, k−1)` when both indices exist.
    pub witness_entry: Option<f64>,
    pub beta_zero_if_substochastic: bool,
    pub monotone_if_substochastic: bool,
    pub alpha_zero_if_k_positive: bool,
    pub alpha_bound_if_k_zero: bool,
    /// At `α = (1 − p_0)/q_1`, `k = 0`: whether `P̂` is stochastic.
    pub stochastic_at_threshold: Option<bool>,
    /// Below the threshold, `k = 0`: whether mass leaks only at 0.
    pub leak_only_at_zero: Option<bool>,
}

impl RigidityReport {
    pub fn implications_hold(&self) -> bool {
        self.beta_zero_if_substochastic
            && self.monotone_if_substochastic
            && self.alpha_zero_if_k_positive
            && self.alpha_bound_if_k_zero
            && self.stochastic_at_threshold.unwrap_or(true)
            && self.leak_only_at_zero.unwrap_or(true)
    }
}

pub fn prop8_rigidity_check(params: &BDParams, k: usize, alpha: f64, beta: f64) -> Result<RigidityReport> {
    if !params.is_irreducible() {
        return Err(Error::NotIrreducible { classes: 0 });
    }
    let p = params.kernel();
    let report = ultrametric_dual(&p, k, alpha, beta)?;
    let n = params.n;
    let feasible = report.feasible;
    let row_sums: Vec<f64> = (0..=n).map(|y| report.p_hat_raw.row(y).sum()).collect();
    let substochastic = feasible && row_sums.iter().all(|&s| s <= 1.0 + EPS_STOCH);
    let stochastic = feasible && row_sums.iter().all(|&s| (s - 1.0).abs() <= EPS_SOLVE);
    let leaking_states = (0..=n).filter(|&y| row_sums[y] < 1.0 - EPS_STOCH).collect::<Vec<_>>();
    let monotone = params.is_monotone();
    let stated = (1.0 - params.p[0]) / params.q[1];
    let row0 = params.p[0] / params.q[1];
    let witness_entry = (k >= 1 && k + 2 <= n).then(|| report.p_hat_raw[(k + 2, k - 1)]);
    let zero = |v: f64| v <= 1e-9;
    Ok(RigidityReport {
        feasible,
        substochastic,
        stochastic,
        monotone,
        leaking_states: leaking_states.clone(),
        alpha_threshold_stated: stated,
        alpha_threshold_row0: row0,
        witness_entry,
        beta_zero_if_substochastic: !substochastic || zero(beta),
        monotone_if_substochastic: !substochastic || monotone,
        alpha_zero_if_k_positive: !(substochastic && k >= 1) || zero(alpha),
        alpha_bound_if_k_zero: !(substochastic && k == 0) || alpha <= stated + 1e-12,
        stochastic_at_threshold: (k == 0 && (alpha - stated).abs() <= 1e-12).then_some(stochastic),
        leak_only_at_zero: (k == 0 && alpha < stated - 1e-12 && substochastic)
            .then(|| leaking_states.iter().all(|&s| s == 0)),
        row_sums,
        report,
    })
}
