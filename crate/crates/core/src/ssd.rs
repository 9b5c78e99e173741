//! Separation distance, admissible starting laws, sharpness of intertwining
//! duals, and the law of the absorption time by three independent routes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chains::BDParams;
use crate::duals::DualFunction;
use crate::error::{Error, Result};
use crate::kernel::{self, Kernel};
use crate::linalg;
use crate::spectral::Spectrum;
use crate::tol::{EPS_NEG, EPS_SOLVE};

/// `sep(μ, π) = max_y (1 − μ(y)/π(y))`.
pub fn separation(mu: &DVector<f64>, pi: &DVector<f64>) -> Result<f64> {
    if mu.len() != pi.len() {
        return Err(Error::DimensionMismatch { expected: pi.len(), found: mu.len() });
    }
    if let Some(state) = pi.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroPiEntry { state });
    }
    Ok(mu.iter().zip(pi.iter()).map(|(m, p)| 1.0 - m / p).fold(f64::NEG_INFINITY, f64::max))
}

/// `‖μ − π‖_TV = ½ Σ |μ − π|`.
pub fn total_variation(mu: &DVector<f64>, pi: &DVector<f64>) -> f64 {
    0.5 * (mu - pi).iter().map(|v| v.abs()).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct Admissible {
    /// `π̃_0` with `π̃_0' Λ = π_0'`.
    pub pi_tilde_0: DVector<f64>,
    /// `‖Λ' π̃_0 − π_0‖∞`.
    pub residual: f64,
    /// Left probability eigenvector of `Λ`, when unique.
    pub pi_lambda: Option<DVector<f64>>,
    /// `(b̃, b)` with `e_b̃' Λ = e_b'`.
    pub point_pairs: Vec<(usize, usize)>,
}

/// Solve `π̃_0' Λ = π_0'` and require a nonnegative solution.
pub fn admissible_initials(lambda: &Kernel, pi0: &DVector<f64>) -> Result<Admissible> {
    let n = lambda.n();
    if pi0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi0.len() });
    }
    let lt = lambda.matrix().transpose();
    let mut sol = linalg::solve_vec(&lt, pi0).map_err(|e| Error::NotAdmissible(format!("link not invertible: {e}")))?;
    if let Some(x) = sol.iter().position(|&v| v < -EPS_NEG) {
        return Err(Error::NotAdmissible(format!("negative mass {:e} at state {x}", sol[x])));
    }
    sol.iter_mut().for_each(|v| *v = v.max(0.0));
    let residual = linalg::vec_inf(&(&lt * &sol - pi0));
    let pi_lambda = kernel::stationary_unchecked(lambda.matrix()).ok().map(|p| p.into_vector());
    Ok(Admissible { pi_tilde_0: sol, residual, pi_lambda, point_pairs: point_pairs(lambda) })
}

fn point_pairs(lambda: &Kernel) -> Vec<(usize, usize)> {
    let n = lambda.n();
    let mut out = Vec::new();
    for bt in 0..n {
        if let Some(b) = (0..n).find(|&b| lambda.get(bt, b) >= 1.0 - 1e-12) {
            out.push((bt, b));
        }
    }
    out
}

/// Closed form for the Siegmund link:
/// `π̃_0(x) = π^c(x) (π_0(x)/π(x) − π_0(x+1)/π(x+1))`, valid iff the ratio
/// `π_0/π` is nonincreasing.
pub fn siegmund_admissible(pi: &DVector<f64>, pi0: &DVector<f64>) -> Result<DVector<f64>> {
    let n = pi.len();
    if pi0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi0.len() });
    }
    if let Some(state) = pi.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroPiEntry { state });
    }
    let ratio = |x: usize| if x < n { pi0[x] / pi[x] } else { 0.0 };
    for x in 0..n - 1 {
        if ratio(x + 1) > ratio(x) * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::NotAdmissible(format!("π_0/π increases between {x} and {}", x + 1)));
        }
    }
    let cum = kernel::cumulative(pi);
    Ok(DVector::from_fn(n, |x, _| (cum[x] * (ratio(x) - ratio(x + 1))).max(0.0)))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SharpnessConditions {
    /// `d` with `Λ e_d = π(d) e_∂̃`.
    pub link_witnesses: Vec<usize>,
    /// `(d, c)` with `e_d' H = c e_∂̃'`, `c > 0`.
    pub h_row_witnesses: Vec<(usize, f64)>,
    /// `H e_∂̃` is a positive constant column and an `H`-row witness exists.
    pub pair_condition: bool,
}

impl SharpnessConditions {
    pub fn witness(&self) -> Option<usize> {
        self.link_witnesses.first().copied()
    }
}

/// Search for witness states of `∂̃`.
pub fn sharpness_conditions(h: &DualFunction, lambda: &Kernel, pi: &DVector<f64>, partial: usize) -> SharpnessConditions {
    let n = lambda.n();
    let link_witnesses = (0..n)
        .filter(|&d| (0..n).all(|x| {
            let want = if x == partial { pi[d] } else { 0.0 };
            (lambda.get(x, d) - want).abs() <= EPS_SOLVE
        }))
        .collect();
    let hm = h.matrix();
    let h_row_witnesses: Vec<(usize, f64)> = (0..n)
        .filter_map(|d| {
            let c = hm[(d, partial)];
            let ok = c > 0.0 && (0..n).all(|y| y == partial || hm[(d, y)].abs() <= 1e-12 * c);
            ok.then_some((d, c))
        })
        .collect();
    let c0 = hm[(0, partial)];
    let constant = c0 > 0.0 && hm.column(partial).iter().all(|v| (v - c0).abs() <= 1e-12 * c0);
    SharpnessConditions { link_witnesses, pair_condition: constant && !h_row_witnesses.is_empty(), h_row_witnesses }
}

#[derive(Debug, Clone)]
pub struct SharpnessReport {
    /// `(n, sep(π_n, π), P(T̃ > n))`.
    pub rows: Vec<(usize, f64, f64)>,
    pub max_gap: f64,
    pub partial: usize,
    pub witness: Option<usize>,
    pub admissibility_residual: f64,
    /// `sep ≤ survival + 1e-9` at every `n`.
    pub inequality_holds: bool,
    /// A witness exists and the gap is at most 1e-9.
    pub sharp: bool,
}

/// Compare `sep(π_n, π)` under `p` with the survival of `P̃` outside `∂̃`.
/// In a pipeline `p` is the reversed kernel `⃖P`, the one intertwined with
/// `P̃`; for reversible chains it is `P` itself.
pub fn verify_sharpness(
    p: &Kernel,
    p_tilde: &Kernel,
    lambda: &Kernel,
    pi0: &DVector<f64>,
    pi_tilde_0: &DVector<f64>,
    n_max: usize,
) -> Result<SharpnessReport> {
    let n = p.n();
    let admissibility_residual = linalg::vec_inf(&(lambda.matrix().tr_mul(pi_tilde_0) - pi0));
    if admissibility_residual > EPS_SOLVE {
        return Err(Error::NotAdmissible(format!("residual {admissibility_residual:e}")));
    }
    let pi = kernel::stationary(p)?.into_vector();
    let partial = (0..n)
        .filter(|&a| p_tilde.is_absorbing(a))
        .find(|&a| (0..n).all(|y| (lambda.get(a, y) - pi[y]).abs() <= EPS_SOLVE))
        .ok_or_else(|| Error::NotAdmissible("no absorbing state of P̃ with link row π".into()))?;
    let witness = (0..n).find(|&d| {
        (0..n).all(|x| {
            let want = if x == partial { pi[d] } else { 0.0 };
            (lambda.get(x, d) - want).abs() <= EPS_SOLVE
        })
    });
    let mut mu = pi0.clone();
    let mut nu = pi_tilde_0.clone();
    let mut rows = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        if step > 0 {
            mu = p.matrix().tr_mul(&mu);
            nu = p_tilde.matrix().tr_mul(&nu);
        }
        let sep = separation(&mu, &pi)?;
        let survival = nu.iter().enumerate().filter(|(x, _)| *x != partial).map(|(_, v)| v).sum::<f64>();
        rows.push((step, sep, survival));
    }
    let max_gap = rows.iter().map(|(_, s, v)| (s - v).abs()).fold(0.0, f64::max);
    let inequality_holds = rows.iter().all(|(_, s, v)| *s <= v + 1e-9);
    let sharp = witness.is_some() && max_gap <= 1e-9;
    Ok(SharpnessReport { rows, max_gap, partial, witness, admissibility_residual, inequality_holds, sharp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Spectral,
    MatrixPower,
    Recurrence,
}

#[derive(Debug, Clone)]
pub struct AbsorptionStats {
    /// `P(T̃ = n)` for `n = 0..=n_max`.
    pub pmf: Vec<f64>,
    /// `P(T̃ > n)` for `n = 0..=n_max`.
    pub survival: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub source: Source,
    /// `P(T̃ > n_max)`.
    pub truncation_mass: f64,
}

impl AbsorptionStats {
    pub fn pmf_distance(&self, other: &AbsorptionStats) -> f64 {
        self.pmf.iter().zip(&other.pmf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

const MOMENT_TAIL: f64 = 1e-17;
const MOMENT_CAP: usize = 1_000_000;

/// Absorption time at `∂̃` by exact propagation of the start law. Moments
/// sum the survival function until it drops below 1e-17 and close with a
/// geometric tail at the observed decay ratio.
pub fn absorption_exact(p_tilde: &Kernel, start: &DVector<f64>, partial: usize, n_max: usize) -> Result<AbsorptionStats> {
    let n = p_tilde.n();
    if start.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: start.len() });
    }
    if partial >= n || !p_tilde.is_absorbing(partial) {
        return Err(Error::NotAbsorbing { state: partial });
    }
    let into: DVector<f64> = DVector::from_fn(n, |x, _| if x == partial { 0.0 } else { p_tilde.get(x, partial) });
    let mut inner = p_tilde.matrix().clone();
    for x in 0..n {
        inner[(x, partial)] = 0.0;
        inner[(partial, x)] = 0.0;
    }
    let mut v = start.clone();
    v[partial] = 0.0;
    let mut pmf = vec![start[partial]];
    let mut survival = vec![v.sum()];
    let (mut m1, mut m2) = (survival[0], survival[0]);
    let mut prev = survival[0];
    let mut step = 0usize;
    while step < n_max || (prev > MOMENT_TAIL && step < MOMENT_CAP) {
        step += 1;
        let hit = v.dot(&into);
        v = inner.tr_mul(&v);
        let s = v.sum().max(0.0);
        if step <= n_max {
            pmf.push(hit);
            survival.push(s);
        }
        m1 += s;
        m2 += (2 * step + 1) as f64 * s;
        if s == 0.0 {
            prev = 0.0;
            if step >= n_max {
                break;
            }
            continue;
        }
        let rho = s / prev;
        prev = s;
        if step >= n_max && s <= MOMENT_TAIL && rho < 1.0 {
            let k = step as f64;
            let g = rho / (1.0 - rho);
            m1 += s * g;
            m2 += s * (2.0 * k * g + 2.0 * rho / (1.0 - rho).powi(2) + g);
            prev = 0.0;
            break;
        }
    }
    if prev > 1e-9 {
        return Err(Error::TruncationTooCoarse { tail: prev });
    }
    let truncation_mass = *survival.last().unwrap_or(&0.0);
    Ok(AbsorptionStats { pmf, survival, mean: m1, variance: m2 - m1 * m1, source: Source::MatrixPower, truncation_mass })
}

/// Smallest `n` with `P(T̃ > n) < 1e-12`, capped at 10⁶.
pub fn default_n_max(p_tilde: &Kernel, start: &DVector<f64>, partial: usize) -> usize {
    let mut v = start.clone();
    v[partial] = 0.0;
    let mut inner = p_tilde.matrix().clone();
    for x in 0..p_tilde.n() {
        inner[(x, partial)] = 0.0;
    }
    let mut n = 0;
    while v.sum() >= 1e-12 && n < MOMENT_CAP {
        v = inner.tr_mul(&v);
        n += 1;
    }
    n
}

fn check_spectrum(spec: &Spectrum) -> Result<()> {
    let t = &spec.eigenvalues;
    if t.is_empty() || (t[0] - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter("spectrum must start with t_0 = 1".into()));
    }
    if let Some(bad) = t[1..].iter().find(|&&v| !(v > -1.0 && v < 1.0)) {
        return Err(Error::InvalidParameter(format!("eigenvalue {bad} outside (-1, 1)")));
    }
    Ok(())
}

/// `(E T̃, Var T̃) = (Σ 1/(1−t_k), Σ t_k/(1−t_k)²)` over `k ≥ 1`.
pub fn spectral_moments(spec: &Spectrum) -> Result<(f64, f64)> {
    check_spectrum(spec)?;
    let t = &spec.eigenvalues[1..];
    let mean = t.iter().map(|t| 1.0 / (1.0 - t)).sum();
    let var = t.iter().map(|t| t / (1.0 - t).powi(2)).sum();
    Ok((mean, var))
}

/// Absorption law from the spectrum: the generating function
/// `Π_k (1−t_k) u / (1 − t_k u)` is applied one factor at a time as the
/// filter `h[n] = (1−t) g[n−1] + t h[n−1]`. For `t < 0` this is the
/// Bernoulli shift `B ~ Bernoulli(1/(1−t))` deconvolution in disguise.
pub fn absorption_spectral(spec: &Spectrum, n_max: usize) -> Result<AbsorptionStats> {
    let (mean, variance) = spectral_moments(spec)?;
    let mut g = vec![0.0; n_max + 1];
    g[0] = 1.0;
    for &t in &spec.eigenvalues[1..] {
        let mut h = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            h[n] = (1.0 - t) * g[n - 1] + t * h[n - 1];
        }
        g = h;
    }
    let pmf: Vec<f64> = g.into_iter().map(|v| if v < 0.0 && v > -EPS_NEG { 0.0 } else { v }).collect();
    let survival = survival_from_pmf(&pmf);
    let truncation_mass = *survival.last().unwrap_or(&0.0);
    Ok(AbsorptionStats { pmf, survival, mean, variance, source: Source::Spectral, truncation_mass })
}

fn survival_from_pmf(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|p| {
            acc += p;
            (1.0 - acc).max(0.0)
        })
        .collect()
}

/// `P(T̃ > n) = Σ_l Π_{k≠l} (1−t_k)/(t_l−t_k) t_l^n`, for `n ≥ N−1`.
/// Divides by eigenvalue gaps, so it is refused when a gap is below 1e-8.
pub fn partial_fraction_tail(spec: &Spectrum, n: usize) -> Result<f64> {
    check_spectrum(spec)?;
    let t = &spec.eigenvalues[1..];
    let gap = spec.eigenvalues[1..].windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    if gap < 1e-8 {
        return Err(Error::RepeatedEigenvalue { gap });
    }
    Ok((0..t.len())
        .map(|l| {
            let c: f64 = (0..t.len()).filter(|&k| k != l).map(|k| (1.0 - t[k]) / (t[l] - t[k])).product();
            c * t[l].powi(n as i32)
        })
        .sum())
}

/// Hitting time of `N` from `0` for an upward BD kernel as the sum of the
/// independent passage times `S_y` from `y` to `y+1`. Moments follow the
/// first- and second-moment recursions; the pmf of each `S_y` follows from
/// `S_y = 1 + 1(hold) S'_y + 1(down)(S_{y−1} + S''_y)`.
pub fn absorption_recurrence(p_tilde: &BDParams, n_max: usize) -> Result<AbsorptionStats> {
    let n = p_tilde.n;
    if let Some(state) = (0..n).find(|&y| p_tilde.p[y] <= 0.0) {
        return Err(Error::ZeroUpProbability { state });
    }
    let mut mean = 0.0;
    let mut variance = 0.0;
    let (mut e_prev, mut v_prev) = (0.0, 0.0);
    let mut total = vec![0.0; n_max + 1];
    total[0] = 1.0;
    let mut g_prev = vec![0.0; n_max + 1];
    for y in 0..n {
        let (p, q, r) = (p_tilde.p[y], p_tilde.q[y], p_tilde.r[y]);
        let e = 1.0 / p + q / p * e_prev;
        let a = (p - 1.0) / (p * p) + 2.0 * (1.0 - p) / p * e + 2.0 * q * (p - 1.0) / (p * p) * e_prev
            + 2.0 * q / p * e_prev * e
            - q * (q - p) / (p * p) * e_prev * e_prev;
        let v = q / p * v_prev + a;
        mean += e;
        variance += v;
        let mut g = vec![0.0; n_max + 1];
        for m in 1..=n_max {
            let mut val = if m == 1 { p } else { 0.0 };
            val += r * g[m - 1];
            if q > 0.0 {
                val += q * (0..m).map(|j| g_prev[j] * g[m - 1 - j]).sum::<f64>();
            }
            g[m] = val;
        }
        total = convolve(&total, &g);
        g_prev = g;
        e_prev = e;
        v_prev = v;
    }
    let survival = survival_from_pmf(&total);
    let truncation_mass = *survival.last().unwrap_or(&0.0);
    Ok(AbsorptionStats { pmf: total, survival, mean, variance, source: Source::Recurrence, truncation_mass })
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len();
    (0..len).map(|m| (0..=m).map(|j| a[j] * b[m - j]).sum()).collect()
}

/// View an upward-absorbing BD kernel (births, deaths, holding; `N`
/// absorbing) as parameters for [`absorption_recurrence`].
pub fn upward_bd(p_tilde: &Kernel) -> Result<BDParams> {
    if !p_tilde.is_tridiagonal() {
        let n = p_tilde.n();
        for x in 0..n {
            for y in 0..n {
                if x.abs_diff(y) > 1 && p_tilde.get(x, y) != 0.0 {
                    return Err(Error::NotTridiagonal { row: x, col: y });
                }
            }
        }
    }
    let n = p_tilde.top();
    let p = (0..=n).map(|x| if x < n { p_tilde.get(x, x + 1) } else { 0.0 }).collect();
    let q = (0..=n).map(|x| if x > 0 { p_tilde.get(x, x - 1) } else { 0.0 }).collect();
    let r = (0..=n).map(|x| p_tilde.get(x, x)).collect();
    BDParams::with_absorbing(p, q, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffRow {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub var_over_mean_sq: f64,
    pub gap: f64,
    pub gap_times_mean: f64,
    /// `Var ≤ E / (1 − t_1)`.
    pub var_bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffTable {
    pub rows: Vec<CutoffRow>,
    /// `(1 − t_1) E` strictly increases along the list.
    pub cutoff: bool,
}

/// Moments of the absorption time along a family of spectra.
pub fn cutoff_report<F>(ns: &[usize], family: F) -> Result<CutoffTable>
where
    F: Fn(usize) -> Result<Spectrum> + Sync,
{
    let rows = ns
        .par_iter()
        .map(|&n| {
            let spec = family(n)?;
            let (mean, variance) = spectral_moments(&spec)?;
            Ok(CutoffRow {
                n,
                mean,
                variance,
                var_over_mean_sq: variance / (mean * mean),
                gap: spec.gap,
                gap_times_mean: spec.gap * mean,
                var_bound_holds: variance <= mean / spec.gap * (1.0 + 1e-12),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cutoff = rows.len() >= 2 && rows.windows(2).all(|w| w[1].gap_times_mean > w[0].gap_times_mean * (1.0 + 1e-12));
    Ok(CutoffTable { rows, cutoff })
}

/// `N (log N + log a) / a` and its ratio to the exact mean.
pub fn moran_asymptote(n: usize, a: f64, exact_mean: f64) -> (f64, f64) {
    let nf = n as f64;
    let approx = nf * (nf.ln() + a.ln()) / a;
    (approx, exact_mean / approx)
}

/// `H_N = Σ_{k=1}^N 1/k`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// Identity matrix as a link; useful as a degenerate baseline.
pub fn identity_link(n: usize) -> Kernel {
    Kernel::new(DMatrix::identity(n, n)).expect("identity is a kernel")
}
