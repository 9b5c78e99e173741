//! Birth–death spectra through the symmetrized tridiagonal matrix
//! `Q = D_π^{1/2} P D_π^{-1/2}`, with the orthogonal-polynomial recurrence as
//! an independent oracle.

use nalgebra::DMatrix;

use crate::chains::{bd_stationary, moran_kernel, mutation_bias, BDParams};
use crate::error::{Error, Result};
use crate::kernel;

/// Eigenvalues sorted decreasing, optional spectral weights, and the gap
/// `1 − t_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub gap: f64,
}

impl Spectrum {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let gap = eigenvalues.get(1).map_or(0.0, |t| 1.0 - t);
        Spectrum { eigenvalues, weights: None, gap }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(1.0)
    }

    /// Smallest distance between consecutive eigenvalues.
    pub fn min_separation(&self) -> f64 {
        self.eigenvalues.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
    }
}

/// Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.
/// `d` holds the diagonal, `e[i]` couples `i` and `i+1`. On return `d` holds
/// the eigenvalues and, if given, column `k` of `z` the `k`-th eigenvector.
pub fn tridiagonal_eigen(d: &mut [f64], e: &[f64], mut z: Option<&mut DMatrix<f64>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let mut e: Vec<f64> = e.iter().copied().chain(std::iter::repeat(0.0)).take(n).collect();
    e[n - 1] = 0.0;
    const MAX_ITER: usize = 60;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER {
                return Err(Error::NoConvergence { iterations: MAX_ITER });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[(k, i + 1)];
                        z[(k, i + 1)] = s * z[(k, i)] + c * f;
                        z[(k, i)] = c * z[(k, i)] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn require_irreducible(params: &BDParams) -> Result<()> {
    if params.is_irreducible() {
        Ok(())
    } else {
        let classes = kernel::classify(&params.kernel()).classes.len();
        Err(Error::NotIrreducible { classes })
    }
}

fn symmetrized(params: &BDParams) -> (Vec<f64>, Vec<f64>) {
    let d = params.r.clone();
    let e = (0..params.n).map(|x| (params.p[x] * params.q[x + 1]).sqrt()).collect();
    (d, e)
}

/// Spectrum of an irreducible BD kernel.
pub fn bd_spectrum(params: &BDParams) -> Result<Spectrum> {
    require_irreducible(params)?;
    let (mut d, e) = symmetrized(params);
    tridiagonal_eigen(&mut d, &e, None)?;
    Ok(Spectrum::from_eigenvalues(d))
}

/// Spectrum with weights `μ_k`, the squared first components of the
/// orthonormal eigenvectors of `Q`.
pub fn spectral_weights(params: &BDParams) -> Result<Spectrum> {
    require_irreducible(params)?;
    let (mut d, e) = symmetrized(params);
    let n = d.len();
    let mut z = DMatrix::identity(n, n);
    tridiagonal_eigen(&mut d, &e, Some(&mut z))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let weights = order.iter().map(|&k| z[(0, k)] * z[(0, k)]).collect();
    let gap = eigenvalues.get(1).map_or(0.0, |t| 1.0 - t);
    Ok(Spectrum { eigenvalues, weights: Some(weights), gap })
}

/// `(|μ_0 − π(0)|, |Σμ_k − 1|)`.
pub fn weight_checks(params: &BDParams, spec: &Spectrum) -> Result<(f64, f64)> {
    let w = spec
        .weights
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("spectrum carries no weights".into()))?;
    let pi = bd_stationary(params)?;
    Ok(((w[0] - pi[0]).abs(), (w.iter().sum::<f64>() - 1.0).abs()))
}

/// Polynomials `q_0(t), ..., q_N(t)` from `q_0 = 1` and
/// `t q_y = p_y q_{y+1} + r_y q_y + q_y^death q_{y−1}`, and
/// `R_{N+1}(t) = (t − r_N) q_N(t) − q_N^death q_{N−1}(t)`, whose roots are
/// the eigenvalues.
pub fn orthopoly_oracle(params: &BDParams, t: f64) -> Result<(Vec<f64>, f64)> {
    let n = params.n;
    if let Some(state) = (0..n).find(|&y| params.p[y] <= 0.0) {
        return Err(Error::ZeroBirthProbability { state });
    }
    let mut q = vec![1.0; n + 1];
    for y in 0..n {
        let prev = if y == 0 { 0.0 } else { q[y - 1] };
        q[y + 1] = ((t - params.r[y]) * q[y] - params.q[y] * prev) / params.p[y];
    }
    let prev = if n == 0 { 0.0 } else { q[n - 1] };
    let r = (t - params.r[n]) * q[n] - params.q[n] * prev;
    Ok((q, r))
}

fn r_at(params: &BDParams, t: f64) -> f64 {
    orthopoly_oracle(params, t).map(|(_, r)| r).unwrap_or(f64::NAN)
}

/// Roots of `R_{N+1}` on `[−1−1e-9, 1+1e-9]` by sign changes on a panel
/// grid (4(N+1) panels, doubled until N+1 roots are isolated) and bisection.
/// Returned in decreasing order.
pub fn isolate_roots(params: &BDParams) -> Result<Vec<f64>> {
    orthopoly_oracle(params, 0.0)?;
    let want = params.n + 1;
    let (lo, hi) = (-1.0 - 1e-9, 1.0 + 1e-9);
    let mut panels = 4 * want;
    loop {
        let h = (hi - lo) / panels as f64;
        let xs: Vec<f64> = (0..=panels).map(|i| if i == panels { hi } else { lo + i as f64 * h }).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| r_at(params, x)).collect();
        let mut roots = Vec::new();
        for i in 0..panels {
            if fs[i] == 0.0 {
                roots.push(xs[i]);
            } else if fs[i + 1] != 0.0 && fs[i].signum() != fs[i + 1].signum() {
                roots.push(bisect(params, xs[i], xs[i + 1], fs[i]));
            }
        }
        if fs[panels] == 0.0 {
            roots.push(xs[panels]);
        }
        if roots.len() >= want || panels >= 1 << 22 {
            roots.sort_by(|a, b| b.total_cmp(a));
            return Ok(roots);
        }
        panels *= 2;
    }
}

fn bisect(params: &BDParams, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = r_at(params, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `max |R_{N+1}(t)|` over `points` equally spaced probes of `[−1, 1]`.
pub fn r_scale(params: &BDParams, points: usize) -> f64 {
    let points = points.max(2);
    (0..points)
        .map(|i| r_at(params, -1.0 + 2.0 * i as f64 / (points - 1) as f64).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BdSpectrumChecks {
    pub spectrum: Spectrum,
    pub min_eigenvalue: f64,
    pub monotone: bool,
    /// `min r_x ≥ 1/2`.
    pub half_holding: bool,
    /// `min r_x > 1/2`.
    pub strict_half_holding: bool,
    /// Nonnegative spectrum implies monotone.
    pub nonneg_implies_monotone: bool,
    /// Holding at least 1/2 implies a nonnegative spectrum, and a positive one
    /// when the holding is strictly above 1/2.
    pub half_holding_implies_positive: bool,
    /// Monotone with a negative eigenvalue: the converse of the first
    /// implication fails (reported, not asserted).
    pub converse_fails: bool,
}

impl BdSpectrumChecks {
    pub fn holds(&self) -> bool {
        self.nonneg_implies_monotone && self.half_holding_implies_positive
    }
}

pub fn prop5_checks(params: &BDParams) -> Result<BdSpectrumChecks> {
    let spectrum = bd_spectrum(params)?;
    let min_eigenvalue = spectrum.min_eigenvalue();
    let monotone = params.is_monotone();
    let min_r = params.r.iter().copied().fold(f64::INFINITY, f64::min);
    let half_holding = min_r >= 0.5;
    let strict_half_holding = min_r > 0.5;
    let nonneg = min_eigenvalue >= 0.0;
    let nonneg_implies_monotone = !nonneg || monotone;
    let half_holding_implies_positive = if strict_half_holding {
        min_eigenvalue > 0.0
    } else if half_holding {
        min_eigenvalue >= -1e-12
    } else {
        true
    };
    Ok(BdSpectrumChecks {
        spectrum,
        min_eigenvalue,
        monotone,
        half_holding,
        strict_half_holding,
        nonneg_implies_monotone,
        half_holding_implies_positive,
        converse_fails: monotone && min_eigenvalue < 0.0,
    })
}

/// Closed-form spectrum of the Moran model with affine mutation bias:
/// `t_k = 1 − (k/N)(a + (k−1)(1−a)/N)`, `a = a1 + a2`.
pub fn moran_mutation_spectrum(n: usize, a1: f64, a2: f64) -> Spectrum {
    let a = a1 + a2;
    let nf = n as f64;
    let t = (0..=n)
        .map(|k| {
            let k = k as f64;
            1.0 - k / nf * (a + (k - 1.0) * (1.0 - a) / nf)
        })
        .collect();
    let mut s = Spectrum::from_eigenvalues(t);
    if n > 0 {
        s.gap = a / nf;
    }
    s
}

/// Moran mutation kernel parameters, for comparison with the closed form.
pub fn moran_mutation_params(n: usize, a1: f64, a2: f64) -> Result<BDParams> {
    moran_kernel(n, &mutation_bias(a1, a2, n)?)
}

/// Lazy-boundary reflected walk: up `p`, down `1−p` in the interior, holding
/// `1−p` at 0 and `p` at N.
pub fn reflected_walk(n: usize, p: f64) -> Result<BDParams> {
    let q = 1.0 - p;
    let up = (0..=n).map(|x| if x < n { p } else { 0.0 }).collect();
    let down = (0..=n).map(|x| if x > 0 { q } else { 0.0 }).collect();
    let hold = (0..=n)
        .map(|x| match (x == 0, x == n) {
            (true, true) => 1.0,
            (true, false) => q,
            (false, true) => p,
            _ => 0.0,
        })
        .collect();
    BDParams::new(up, down, hold)
}

/// Exact spectrum of [`reflected_walk`]: `{1} ∪ {2√(pq) cos(kπ/(N+1)) : k = 1..N}`.
pub fn reflected_walk_spectrum(n: usize, p: f64) -> Spectrum {
    let s = 2.0 * (p * (1.0 - p)).sqrt();
    let nf = n as f64 + 1.0;
    let t = std::iter::once(1.0)
        .chain((1..=n).map(|k| s * (k as f64 * std::f64::consts::PI / nf).cos()))
        .collect();
    Spectrum::from_eigenvalues(t)
}

/// The alternative closed form `{1, 2√(pq) cos(kπ/(N+1)) (k = 1..N−1), −1}`.
pub fn reflected_walk_claimed_spectrum(n: usize, p: f64) -> Spectrum {
    let s = 2.0 * (p * (1.0 - p)).sqrt();
    let nf = n as f64 + 1.0;
    let mut t: Vec<f64> = std::iter::once(1.0)
        .chain((1..n).map(|k| s * (k as f64 * std::f64::consts::PI / nf).cos()))
        .collect();
    if n > 0 {
        t.push(-1.0);
    }
    Spectrum::from_eigenvalues(t)
}
