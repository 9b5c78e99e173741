//! Birth–death chains, Moran and Wright–Fisher models, scale functions.

use nalgebra::{DMatrix, DVector};

use crate::duals;
use crate::error::{Error, Result};
use crate::kernel::{self, Kernel, ProbVector};
use crate::tol::{EPS_NEG, EPS_STOCH};

/// Birth–death parameters on `0..=N`: births `p`, deaths `q`, holds `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BDParams {
    pub n: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl BDParams {
    /// Strict constructor: boundary conventions, row sums, and interior
    /// positivity `p_x, q_x > 0` for `0 < x < N`.
    pub fn new(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let bd = Self::build(p, q, r)?;
        for x in 1..bd.n {
            if bd.p[x] <= 0.0 || bd.q[x] <= 0.0 {
                return Err(Error::InvalidBoundary(format!(
                    "interior state {x} needs p_x > 0 and q_x > 0"
                )));
            }
        }
        Ok(bd)
    }

    /// Like [`BDParams::new`] but allows zero interior rates (absorbing
    /// variants).
    pub fn with_absorbing(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        Self::build(p, q, r)
    }

    /// Holds filled in as `1 - p - q`.
    pub fn from_pq(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let r = p.iter().zip(&q).map(|(a, b)| 1.0 - a - b).collect();
        Self::new(p, q, r)
    }

    fn build(p: Vec<f64>, q: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let len = p.len();
        if len == 0 || q.len() != len || r.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: q.len().min(r.len()) });
        }
        let n = len - 1;
        if q[0] != 0.0 {
            return Err(Error::InvalidBoundary("q_0 must be 0".into()));
        }
        if p[n] != 0.0 {
            return Err(Error::InvalidBoundary("p_N must be 0".into()));
        }
        for x in 0..=n {
            let (a, b, c) = (p[x], q[x], r[x]);
            if !(a.is_finite() && b.is_finite() && c.is_finite()) || a < 0.0 || b < 0.0 || c < -EPS_NEG {
                return Err(Error::RowSumError { state: x, sum: a + b + c });
            }
            if (a + b + c - 1.0).abs() > EPS_STOCH {
                return Err(Error::RowSumError { state: x, sum: a + b + c });
            }
        }
        let r = r.into_iter().map(|v| v.max(0.0)).collect();
        Ok(BDParams { n, p, q, r })
    }

    /// Read a tridiagonal stochastic kernel back into BD form.
    pub fn from_kernel(k: &Kernel) -> Result<Self> {
        let m = k.n();
        for i in 0..m {
            for j in 0..m {
                if i.abs_diff(j) > 1 && k.get(i, j) != 0.0 {
                    return Err(Error::NotTridiagonal { row: i, col: j });
                }
            }
        }
        let p = (0..m).map(|x| if x + 1 < m { k.get(x, x + 1) } else { 0.0 }).collect();
        let q = (0..m).map(|x| if x > 0 { k.get(x, x - 1) } else { 0.0 }).collect();
        let r = (0..m).map(|x| k.get(x, x)).collect();
        Self::with_absorbing(p, q, r)
    }

    /// Irreducible iff all births below N and all deaths above 0 are positive.
    pub fn is_irreducible(&self) -> bool {
        (0..self.n).all(|x| self.p[x] > 0.0) && (1..=self.n).all(|x| self.q[x] > 0.0)
    }

    /// BD monotonicity `p_x + q_{x+1} ≤ 1`.
    pub fn is_monotone(&self) -> bool {
        (0..self.n).all(|x| self.p[x] + self.q[x + 1] <= 1.0 + EPS_NEG)
    }

    pub fn kernel(&self) -> Kernel {
        bd_kernel(self).expect("validated BD parameters form a kernel")
    }
}

pub fn bd_kernel(params: &BDParams) -> Result<Kernel> {
    let m = params.n + 1;
    let mut mat = DMatrix::zeros(m, m);
    for x in 0..m {
        mat[(x, x)] = params.r[x];
        if x + 1 < m {
            mat[(x, x + 1)] = params.p[x];
        }
        if x > 0 {
            mat[(x, x - 1)] = params.q[x];
        }
    }
    Kernel::stochastic(mat)
}

/// Product formula `π(y) ∝ Π_{z<y} p_z / q_{z+1}`.
pub fn bd_stationary(params: &BDParams) -> Result<ProbVector> {
    if !params.is_irreducible() {
        return Err(Error::NotIrreducible { classes: 0 });
    }
    let mut w = vec![1.0; params.n + 1];
    for y in 1..=params.n {
        w[y] = w[y - 1] * params.p[y - 1] / params.q[y];
    }
    let s: f64 = w.iter().sum();
    ProbVector::new(DVector::from_iterator(w.len(), w.iter().map(|v| v / s)))
}

/// Bias mechanism sampled on the grid `x/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasFunction {
    values: Vec<f64>,
    pub nondecreasing: bool,
    pub positive_at_zero: bool,
    pub below_one_at_one: bool,
}

impl BiasFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter("bias table needs N >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!("bias value {} at {i} outside [0,1]", values[i])));
        }
        let nondecreasing = values.windows(2).all(|w| w[1] >= w[0]);
        let positive_at_zero = values[0] > 0.0;
        let below_one_at_one = *values.last().unwrap() < 1.0;
        Ok(BiasFunction { values, nondecreasing, positive_at_zero, below_one_at_one })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..=n).map(|x| f(x as f64 / n as f64)).collect())
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n + 1])
    }

    /// Grid size `N`.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `p(x/N)`.
    pub fn at(&self, x: usize) -> f64 {
        self.values[x]
    }

    /// Bias of the complement chain `N - X`: `p̄(u) = 1 - p(1-u)`.
    pub fn complement(&self) -> Self {
        let n = self.n();
        Self::new((0..=n).map(|x| 1.0 - self.values[n - x]).collect())
            .expect("complement of a valid bias stays in [0,1]")
    }
}

/// Affine mutation bias `p(u) = (1-a2) u + a1 (1-u)`.
pub fn mutation_bias(a1: f64, a2: f64, n: usize) -> Result<BiasFunction> {
    if !(0.0..=1.0).contains(&a1) || !(0.0..=1.0).contains(&a2) {
        return Err(Error::InvalidParameter("a1, a2 must lie in [0,1]".into()));
    }
    BiasFunction::from_fn(n, |u| (1.0 - a2) * u + a1 * (1.0 - u))
}

/// Moran chain: `q_x = (x/N) q(x/N)`, `p_x = (1-x/N) p(x/N)`.
pub fn moran_kernel(n: usize, bias: &BiasFunction) -> Result<BDParams> {
    if bias.n() != n {
        return Err(Error::DimensionMismatch { expected: n + 1, found: bias.values.len() });
    }
    let nf = n as f64;
    let mut p = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    let mut r = vec![0.0; n + 1];
    for x in 0..=n {
        let u = x as f64 / nf;
        let b = bias.at(x);
        p[x] = (1.0 - u) * b;
        q[x] = u * (1.0 - b);
        r[x] = u * b + (1.0 - u) * (1.0 - b);
    }
    BDParams::with_absorbing(p, q, r)
}

/// Bernoulli–Laplace urn: Moran with `p(u) = 1 - u`.
pub fn bernoulli_laplace(n: usize) -> Result<BDParams> {
    moran_kernel(n, &mutation_bias(1.0, 1.0, n)?)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Binomial rows `P(x,y) = C(N,y) p(x/N)^y (1-p(x/N))^{N-y}`.
pub fn wright_fisher_kernel(n: usize, bias: &BiasFunction) -> Result<Kernel> {
    if bias.n() != n {
        return Err(Error::DimensionMismatch { expected: n + 1, found: bias.values.len() });
    }
    let lf = ln_factorials(n);
    let m = DMatrix::from_fn(n + 1, n + 1, |x, y| {
        let b = bias.at(x);
        if b == 0.0 {
            return if y == 0 { 1.0 } else { 0.0 };
        }
        if b == 1.0 {
            return if y == n { 1.0 } else { 0.0 };
        }
        let ln = lf[n] - lf[y] - lf[n - y] + y as f64 * b.ln() + (n - y) as f64 * (1.0 - b).ln();
        ln.exp()
    });
    Kernel::stochastic(m)
}

/// Scale function and absorption probabilities of a doubly absorbing chain.
#[derive(Debug, Clone)]
pub struct ScaleProfile {
    pub eta: DVector<f64>,
    /// `φ(x) = P_x(absorbed at 0)`.
    pub phi: DVector<f64>,
    /// Stationary law of the Siegmund dual restricted to `0..N-1`.
    pub pi_hat_star: DVector<f64>,
    /// `max_x |φ(x) - (1 - π̂_*^c(x-1))|`.
    pub identity_residual: f64,
    /// Deviation of a 5000-step Cesàro average from `pi_hat_star`.
    pub cesaro_deviation: f64,
}

pub fn absorption_profile(params: &BDParams) -> Result<ScaleProfile> {
    let n = params.n;
    if n == 0 || params.r[0] != 1.0 || params.r[n] != 1.0 {
        return Err(Error::NotDoublyAbsorbing);
    }
    for z in 1..n {
        if params.p[z] <= 0.0 || params.q[z] <= 0.0 {
            return Err(Error::InvalidBoundary(format!("interior state {z} needs p, q > 0")));
        }
    }
    let mut eta = DVector::zeros(n + 1);
    let mut prod = 1.0;
    for x in 1..=n {
        let y = x - 1;
        if y >= 1 {
            prod *= params.q[y] / params.p[y];
        }
        eta[x] = eta[x - 1] + prod;
    }
    let phi: DVector<f64> = eta.map(|e| 1.0 - e / eta[n]);

    let dual = duals::siegmund_dual(&params.kernel())?;
    let p_hat = dual.kernel()?;
    let states: Vec<usize> = (0..n).collect();
    let restricted = p_hat.restrict(&states)?;
    let pi_hat_star = kernel::stationary_unchecked(restricted.matrix())?.into_vector();
    let cesaro = kernel::cesaro_stationary(&restricted, 5000);
    let cesaro_deviation = (&cesaro - &pi_hat_star).amax();

    let cum = kernel::cumulative(&pi_hat_star);
    let identity_residual = (0..=n)
        .map(|x| {
            let c = if x == 0 { 0.0 } else { cum[x - 1] };
            (phi[x] - (1.0 - c)).abs()
        })
        .fold(0.0, f64::max);
    Ok(ScaleProfile { eta, phi, pi_hat_star, identity_residual, cesaro_deviation })
}
