//! Coupling of a chain with its intertwining dual on the product space,
//! exact propagation of the joint law, and seeded Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{self, Kernel};
use crate::linalg;
use crate::tol::EPS_SOLVE;

/// `P̄((x,x̃),(y,ỹ)) = P(x,y) P̃(x̃,ỹ) Λ(ỹ,y) / (ΛP)(x̃,y)`, with `0/0 = 0`.
/// Pair `(x, x̃)` has index `x·ñ + x̃`.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    pub n: usize,
    pub n_tilde: usize,
    pub matrix: DMatrix<f64>,
    /// Pairs with `Λ(x̃, x) > 0`; they are closed under `P̄`, the kernel is
    /// stochastic on them, and the rows of all other pairs are left empty.
    pub reachable: Vec<bool>,
    /// `max |P̄ 1 − 1|` over reachable pairs.
    pub max_row_deviation: f64,
}

impl ProductKernel {
    pub fn index(&self, x: usize, xt: usize) -> usize {
        x * self.n_tilde + xt
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        (i / self.n_tilde, i % self.n_tilde)
    }

    pub fn size(&self) -> usize {
        self.n * self.n_tilde
    }

    /// SHA-256 of the dimensions and the little-endian entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.n_tilde as u64).to_le_bytes());
        for v in self.matrix.iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Pairs reachable from the support of `law`.
    pub fn reachable_from(&self, law: &DVector<f64>) -> Vec<bool> {
        let m = self.size();
        let mut seen: Vec<bool> = law.iter().map(|&v| v > 0.0).collect();
        let mut stack: Vec<usize> = (0..m).filter(|&i| seen[i]).collect();
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if !seen[j] && self.matrix[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }
}

/// Build `P̄` from an intertwined triple `P̃ Λ = Λ P`. In a pipeline the
/// role of `P` is played by the reversed kernel `⃖P`.
pub fn coupling_kernel(p: &Kernel, p_tilde: &Kernel, lambda: &Kernel) -> Result<ProductKernel> {
    let (n, nt) = (p.n(), p_tilde.n());
    if lambda.matrix().shape() != (nt, n) {
        return Err(Error::SizeMismatch { left: nt * n, right: lambda.n() * lambda.n() });
    }
    let lp = lambda.matrix() * p.matrix();
    let residual = linalg::norm_inf(&(p_tilde.matrix() * lambda.matrix() - &lp));
    if residual > EPS_SOLVE {
        return Err(Error::IntertwiningResidualTooLarge { residual });
    }
    let m = n * nt;
    let reachable: Vec<bool> = (0..m).map(|i| lambda.get(i % nt, i / nt) > 0.0).collect();
    let mut matrix = DMatrix::zeros(m, m);
    for x in 0..n {
        for xt in 0..nt {
            let i = x * nt + xt;
            if !reachable[i] {
                continue;
            }
            for y in 0..n {
                let pxy = p.get(x, y);
                let den = lp[(xt, y)];
                if pxy == 0.0 || den <= 0.0 {
                    continue;
                }
                for yt in 0..nt {
                    let num = pxy * p_tilde.get(xt, yt) * lambda.get(yt, y);
                    if num > 0.0 {
                        matrix[(i, y * nt + yt)] = num / den;
                    }
                }
            }
        }
    }
    let max_row_deviation = (0..m)
        .filter(|&i| reachable[i])
        .map(|i| (matrix.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(ProductKernel { n, n_tilde: nt, matrix, reachable, max_row_deviation })
}

/// Admissible product law `π̃_0(x̃) Λ(x̃, x)`, flattened by pair index.
pub fn product_initial(lambda: &Kernel, pi_tilde_0: &DVector<f64>) -> DVector<f64> {
    let (nt, n) = lambda.matrix().shape();
    DVector::from_fn(n * nt, |i, _| {
        let (x, xt) = (i / nt, i % nt);
        pi_tilde_0[xt] * lambda.get(xt, x)
    })
}

#[derive(Debug, Clone)]
pub struct JointReport {
    /// Joint law at each step, flattened by pair index.
    pub joint: Vec<DVector<f64>>,
    /// `max |P(X_n = x | X̃_n = x̃) − Λ(x̃, x)|` over steps and positive cells.
    pub conditional_deviation: f64,
    /// Deviation of the `X` marginal from `π_0' P^n`.
    pub x_marginal_deviation: f64,
    /// Deviation of the `X̃` marginal from `π̃_0' P̃^n`.
    pub x_tilde_marginal_deviation: f64,
    /// `max |P(X_k = · | X̃_0..X̃_k) − Λ(X̃_k, ·)|` over enumerated paths.
    pub path_deviation: f64,
    /// The same restricted to paths ending at `∂̃`, against `π`.
    pub absorbed_path_deviation: f64,
    pub paths_checked: usize,
}

impl JointReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.conditional_deviation <= tol
            && self.x_marginal_deviation <= tol
            && self.x_tilde_marginal_deviation <= tol
            && self.path_deviation <= tol
            && self.absorbed_path_deviation <= tol
    }
}

/// Limits for the path-conditional check, which enumerates `X̃` paths.
#[derive(Debug, Clone, Copy)]
pub struct PathLimits {
    pub max_len: usize,
    pub max_paths: usize,
}

impl Default for PathLimits {
    fn default() -> Self {
        PathLimits { max_len: 6, max_paths: 20_000 }
    }
}

/// Propagate the joint law for `n_max` steps from a product-form start and
/// check the conditional-law identities.
#[allow(clippy::too_many_arguments)]
pub fn exact_joint(
    pbar: &ProductKernel,
    p: &Kernel,
    p_tilde: &Kernel,
    lambda: &Kernel,
    initial: &DVector<f64>,
    partial: Option<usize>,
    n_max: usize,
    limits: PathLimits,
) -> Result<JointReport> {
    let (n, nt) = (pbar.n, pbar.n_tilde);
    let pi_tilde_0 = DVector::from_fn(nt, |xt, _| (0..n).map(|x| initial[x * nt + xt]).sum::<f64>());
    let residual = linalg::vec_inf(&(product_initial(lambda, &pi_tilde_0) - initial));
    if residual > 1e-12 {
        return Err(Error::NonProductInitial { residual });
    }
    let pi0 = DVector::from_fn(n, |x, _| (0..nt).map(|xt| initial[x * nt + xt]).sum::<f64>());

    let mut joint = vec![initial.clone()];
    let (mut cond, mut xdev, mut xtdev) = (0.0f64, 0.0f64, 0.0f64);
    let mut mu = pi0.clone();
    let mut nu = pi_tilde_0.clone();
    for step in 0..=n_max {
        if step > 0 {
            let next = pbar.matrix.tr_mul(&joint[step - 1]);
            joint.push(next);
            mu = p.matrix().tr_mul(&mu);
            nu = p_tilde.matrix().tr_mul(&nu);
        }
        let j = &joint[step];
        for xt in 0..nt {
            let m: f64 = (0..n).map(|x| j[x * nt + xt]).sum();
            xtdev = xtdev.max((m - nu[xt]).abs());
            if m > 1e-14 {
                for x in 0..n {
                    cond = cond.max((j[x * nt + xt] / m - lambda.get(xt, x)).abs());
                }
            }
        }
        for x in 0..n {
            let m: f64 = (0..nt).map(|xt| j[x * nt + xt]).sum();
            xdev = xdev.max((m - mu[x]).abs());
        }
    }

    let mut state = PathState { pbar, lambda, partial, limits, pi: None, dev: 0.0, absorbed_dev: 0.0, paths: 0 };
    if partial.is_some() {
        state.pi = Some(kernel::stationary(p)?.into_vector());
    }
    for xt0 in 0..nt {
        if pi_tilde_0[xt0] <= 0.0 {
            continue;
        }
        let v = DVector::from_fn(n, |x, _| initial[x * nt + xt0]);
        state.visit(&v, xt0, 0);
    }
    Ok(JointReport {
        joint,
        conditional_deviation: cond,
        x_marginal_deviation: xdev,
        x_tilde_marginal_deviation: xtdev,
        path_deviation: state.dev,
        absorbed_path_deviation: state.absorbed_dev,
        paths_checked: state.paths,
    })
}

struct PathState<'a> {
    pbar: &'a ProductKernel,
    lambda: &'a Kernel,
    partial: Option<usize>,
    limits: PathLimits,
    pi: Option<DVector<f64>>,
    dev: f64,
    absorbed_dev: f64,
    paths: usize,
}

impl PathState<'_> {
    /// `v(x) = P(X_k = x, X̃_0..X̃_k = path)`, path ending at `xt`.
    fn visit(&mut self, v: &DVector<f64>, xt: usize, len: usize) {
        if self.paths >= self.limits.max_paths {
            return;
        }
        self.paths += 1;
        let mass = v.sum();
        if mass > 1e-14 {
            for x in 0..v.len() {
                self.dev = self.dev.max((v[x] / mass - self.lambda.get(xt, x)).abs());
            }
            if let (Some(a), Some(pi)) = (self.partial, &self.pi) {
                if a == xt {
                    for x in 0..v.len() {
                        self.absorbed_dev = self.absorbed_dev.max((v[x] / mass - pi[x]).abs());
                    }
                }
            }
        }
        if len >= self.limits.max_len {
            return;
        }
        let (n, nt) = (self.pbar.n, self.pbar.n_tilde);
        for yt in 0..nt {
            let next = DVector::from_fn(n, |y, _| {
                (0..n).map(|x| v[x] * self.pbar.matrix[(x * nt + xt, y * nt + yt)]).sum::<f64>()
            });
            if next.sum() > 1e-14 {
                self.visit(&next, yt, len + 1);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub count: usize,
    pub length: usize,
    pub kernel_hash: String,
    /// `(x_k, x̃_k)` for `k = 0..=length`, one path per trajectory.
    pub paths: Vec<Vec<(usize, usize)>>,
    /// First time `X̃` sits at `∂̃`, followed past `length` if needed
    /// (`None` if not reached within the step cap).
    pub absorption_times: Vec<Option<usize>>,
}

/// One cell of the empirical conditional law at the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCheck {
    pub x_tilde: usize,
    pub x: usize,
    pub hits: usize,
    pub frequency: f64,
    pub expected: f64,
    pub standard_error: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub cells: Vec<CellCheck>,
    /// `(x̃, hits)` for conditioning states with fewer than 100 hits.
    pub excluded: Vec<(usize, usize)>,
    pub mean_absorption: f64,
    pub absorption_se: f64,
    /// `(k, empirical P(T̃ > k))` for `k = 0..=length`.
    pub survival: Vec<(usize, f64)>,
}

impl EmpiricalReport {
    pub fn cells_within(&self) -> bool {
        self.cells.iter().all(|c| c.within)
    }
}

const STEP_CAP: usize = 1_000_000;

fn cumulative_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = 0.0;
            m.row(i)
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().unwrap_or(&0.0);
    let target = u * total;
    let i = cum.partition_point(|&c| c <= target);
    if i < cum.len() {
        return i;
    }
    // Round-off at the top: take the last state with positive mass.
    (0..cum.len()).rev().find(|&j| j == 0 || cum[j] > cum[j - 1]).unwrap_or(0)
}

/// Sample `trials` coupled paths of `length` steps. Trajectory `i` draws from
/// its own ChaCha8 stream `i` under the master seed, so results do not
/// depend on scheduling or thread count.
pub fn simulate(
    pbar: &ProductKernel,
    initial: &DVector<f64>,
    partial: usize,
    length: usize,
    trials: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if initial.len() != pbar.size() {
        return Err(Error::DimensionMismatch { expected: pbar.size(), found: initial.len() });
    }
    if partial >= pbar.n_tilde {
        return Err(Error::NotAbsorbing { state: partial });
    }
    let init: Vec<f64> = {
        let mut acc = 0.0;
        initial
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect()
    };
    let rows = cumulative_rows(&pbar.matrix);
    let runs: Vec<(Vec<(usize, usize)>, Option<usize>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut s = draw(&init, rng.random::<f64>());
            let mut path = Vec::with_capacity(length + 1);
            path.push(pbar.pair(s));
            let mut hit = (pbar.pair(s).1 == partial).then_some(0);
            let mut step = 0;
            while step < length || (hit.is_none() && step < STEP_CAP) {
                s = draw(&rows[s], rng.random::<f64>());
                step += 1;
                let pr = pbar.pair(s);
                if step <= length {
                    path.push(pr);
                }
                if hit.is_none() && pr.1 == partial {
                    hit = Some(step);
                }
            }
            (path, hit)
        })
        .collect();
    let (paths, absorption_times) = runs.into_iter().unzip();
    Ok(TrajectoryBatch { seed, count: trials, length, kernel_hash: pbar.hash(), paths, absorption_times })
}

/// Empirical conditional law at the final step against `Λ`, and the
/// absorption-time summary.
pub fn empirical_report(batch: &TrajectoryBatch, lambda: &Kernel) -> EmpiricalReport {
    let (nt, n) = lambda.matrix().shape();
    let mut hits = vec![0usize; nt];
    let mut counts = vec![vec![0usize; n]; nt];
    for path in &batch.paths {
        let (x, xt) = *path.last().expect("paths are nonempty");
        hits[xt] += 1;
        counts[xt][x] += 1;
    }
    let mut cells = Vec::new();
    let mut excluded = Vec::new();
    for xt in 0..nt {
        if hits[xt] < 100 {
            if hits[xt] > 0 {
                excluded.push((xt, hits[xt]));
            }
            continue;
        }
        for x in 0..n {
            let expected = lambda.get(xt, x);
            let frequency = counts[xt][x] as f64 / hits[xt] as f64;
            let standard_error = (expected * (1.0 - expected) / hits[xt] as f64).sqrt();
            let within = (frequency - expected).abs() <= 3.0 * standard_error + 1e-12;
            cells.push(CellCheck { x_tilde: xt, x, hits: hits[xt], frequency, expected, standard_error, within });
        }
    }
    let times: Vec<f64> = batch.absorption_times.iter().flatten().map(|&t| t as f64).collect();
    let k = times.len().max(1) as f64;
    let mean = times.iter().sum::<f64>() / k;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let total = batch.count.max(1) as f64;
    let survival = (0..=batch.length)
        .map(|step| {
            let alive = batch.absorption_times.iter().filter(|t| t.is_none_or(|t| t > step)).count();
            (step, alive as f64 / total)
        })
        .collect();
    EmpiricalReport { cells, excluded, mean_absorption: mean, absorption_se: (var / k).sqrt(), survival }
}
