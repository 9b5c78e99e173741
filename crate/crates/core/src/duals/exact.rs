//! Exact rational dual solves.
//!
//! The hypergeometric `H` has 1-norm condition number growing like 10^N, so a
//! floating-point solve leaves visible noise in entries that are exactly zero.
//! Building the kernel from its parameters in exact arithmetic and rounding
//! only the final `P̂` avoids that.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{dual_function, DualFamily, DualReport};
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Dense square matrix of exact rationals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMatrix {
    n: usize,
    a: Vec<BigRational>,
}

/// Exact value of an `f64`.
pub fn ratio(f: f64) -> BigRational {
    BigRational::from_float(f).expect("finite float")
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl RationalMatrix {
    pub fn zeros(n: usize) -> Self {
        RationalMatrix { n, a: vec![BigRational::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = BigRational::one();
        }
        m
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> BigRational) -> Self {
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(f(i, j));
            }
        }
        RationalMatrix { n, a }
    }

    /// Exact image of a float matrix.
    pub fn from_f64(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), |i, j| ratio(m[(i, j)]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.a[i * self.n + j]
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_f64().unwrap_or(f64::NAN))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.a[i * n + j] += a * b;
                    }
                }
            }
        }
        out
    }

    /// Gauss–Jordan inverse.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let piv = (col..n).find(|&r| !a.get(r, col).is_zero()).ok_or(Error::SingularSystem)?;
            if piv != col {
                for j in 0..n {
                    a.a.swap(piv * n + j, col * n + j);
                    inv.a.swap(piv * n + j, col * n + j);
                }
            }
            let d = a.get(col, col).clone();
            for j in 0..n {
                a.a[col * n + j] /= &d;
                inv.a[col * n + j] /= &d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let t = a.get(col, j) * &f;
                    a.a[r * n + j] -= t;
                    let t = inv.get(col, j) * &f;
                    inv.a[r * n + j] -= t;
                }
            }
        }
        Ok(inv)
    }

    pub fn min_entry(&self) -> BigRational {
        self.a.iter().cloned().min().unwrap_or_else(BigRational::zero)
    }

    pub fn has_negative(&self) -> bool {
        self.a.iter().any(|v| v.is_negative())
    }
}

/// Affine mutation bias `p(x/N) = (1-a2) x/N + a1 (1 - x/N)`, exact in the
/// binary values of `a1`, `a2`.
pub fn mutation_bias_exact(a1: f64, a2: f64, n: usize) -> Vec<BigRational> {
    let (a1, a2) = (ratio(a1), ratio(a2));
    let nn = int(n as i64);
    (0..=n)
        .map(|x| {
            let u = int(x as i64) / &nn;
            (BigRational::one() - &a2) * &u + &a1 * (BigRational::one() - &u)
        })
        .collect()
}

/// Exact Moran kernel for a bias table on the grid `x/N`.
pub fn moran_exact(bias: &[BigRational]) -> RationalMatrix {
    let n = bias.len() - 1;
    let nn = int(n as i64);
    let one = BigRational::one();
    RationalMatrix::from_fn(n + 1, |x, y| {
        let u = int(x as i64) / &nn;
        let b = &bias[x];
        let p = (&one - &u) * b;
        let q = &u * (&one - b);
        if y == x + 1 {
            p
        } else if y + 1 == x {
            q
        } else if y == x {
            &one - p - q
        } else {
            BigRational::zero()
        }
    })
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// Exact Wright–Fisher kernel: binomial rows with success `p(x/N)`.
pub fn wright_fisher_exact(bias: &[BigRational]) -> RationalMatrix {
    let n = bias.len() - 1;
    let one = BigRational::one();
    RationalMatrix::from_fn(n + 1, |x, y| {
        let b = &bias[x];
        let c = BigRational::from_integer(binomial(n, y));
        c * pow(b, y) * pow(&(&one - b), n - y)
    })
}

fn pow(b: &BigRational, e: usize) -> BigRational {
    let mut out = BigRational::one();
    for _ in 0..e {
        out *= b;
    }
    out
}

/// Exact `H` for the families with rational entries.
pub fn dual_function_exact(family: &DualFamily, n: usize) -> Result<RationalMatrix> {
    let m = n + 1;
    let one = BigRational::one();
    Ok(match family {
        DualFamily::Siegmund => RationalMatrix::from_fn(m, |x, y| if x <= y { one.clone() } else { BigRational::zero() }),
        DualFamily::Ultrametric { k, alpha, beta } => {
            let (a, b) = (ratio(*alpha), ratio(*beta));
            let k = *k;
            RationalMatrix::from_fn(m, |x, y| {
                if x > y {
                    BigRational::zero()
                } else if (x <= k) == (y <= k) {
                    &one + if x <= k { &a } else { &b }
                } else {
                    one.clone()
                }
            })
        }
        DualFamily::Hypergeometric => RationalMatrix::from_fn(m, |x, y| {
            BigRational::new(binomial(n - x, y), binomial(n, y))
        }),
        DualFamily::Vandermonde => RationalMatrix::from_fn(m, |x, y| pow(&BigRational::new(BigInt::from(x), BigInt::from(n)), y)),
        DualFamily::Potential(_) | DualFamily::Custom => {
            return Err(Error::InvalidParameter(format!(
                "no exact form for the {} family",
                family.name()
            )))
        }
    })
}

/// Exact `P̂ = (H⁻¹ P H)'`.
pub fn dual_exact(p: &RationalMatrix, h: &RationalMatrix) -> Result<RationalMatrix> {
    if p.n() != h.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: h.n() });
    }
    Ok(h.inverse()?.mul(&p.mul(h)).transpose())
}

/// Dual report from an exact kernel: `P̂` is solved exactly and rounded
/// once. Returns the rounded `P` alongside.
pub fn exact_dual_report(p: &RationalMatrix, family: DualFamily) -> Result<(Kernel, DualReport)> {
    let n = p.n() - 1;
    let h_exact = dual_function_exact(&family, n)?;
    let p_hat = dual_exact(p, &h_exact)?;
    let pf = Kernel::new(p.to_f64())?;
    let h = dual_function(family, n)?;
    let mut rep = DualReport::finish(&pf, h.matrix(), p_hat.to_f64(), Vec::new());
    rep.notes.push("solved in exact rational arithmetic".into());
    if p_hat.has_negative() {
        rep.notes.push(format!("exact minimum entry {}", p_hat.min_entry().to_f64().unwrap_or(f64::NAN)));
    }
    Ok((pf, rep))
}

/// Moran kernel with affine mutation bias and its exact dual.
pub fn moran_mutation_dual(n: usize, a1: f64, a2: f64, family: DualFamily) -> Result<(Kernel, DualReport)> {
    exact_dual_report(&moran_exact(&mutation_bias_exact(a1, a2, n)), family)
}

/// Wright–Fisher kernel with affine mutation bias and its exact dual.
pub fn wright_fisher_mutation_dual(n: usize, a1: f64, a2: f64, family: DualFamily) -> Result<(Kernel, DualReport)> {
    exact_dual_report(&wright_fisher_exact(&mutation_bias_exact(a1, a2, n)), family)
}
