#![allow(dead_code)]

use dualchain::chains::BDParams;
use dualchain::Kernel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cdf(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = w.iter().map(|v| {
        acc += v / total;
        acc
    }).collect();
    cdf[m - 1] = 1.0;
    cdf
}

fn rows_from_cdfs(cdfs: &[Vec<f64>]) -> DMatrix<f64> {
    let m = cdfs.len();
    DMatrix::from_fn(m, m, |x, y| if y == 0 { cdfs[x][0] } else { cdfs[x][y] - cdfs[x][y - 1] }.max(0.0))
}

/// Row CDFs made nonincreasing in `x` by a running minimum.
fn monotone_dense(rng: &mut impl Rng, m: usize) -> DMatrix<f64> {
    let mut cdfs: Vec<Vec<f64>> = (0..m).map(|_| random_cdf(rng, m)).collect();
    for x in 1..m {
        for y in 0..m {
            cdfs[x][y] = cdfs[x][y].min(cdfs[x - 1][y]);
        }
    }
    rows_from_cdfs(&cdfs)
}

/// Lazy walk with up/down rate 1/4; monotone and irreducible.
fn lazy_walk(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |x, y| {
        let up = if x + 1 < m { 0.25 } else { 0.0 };
        let down = if x > 0 { 0.25 } else { 0.0 };
        if y == x + 1 {
            up
        } else if y + 1 == x {
            down
        } else if y == x {
            1.0 - up - down
        } else {
            0.0
        }
    })
}

/// Random monotone irreducible stochastic kernel on `0..=n`.
pub fn monotone_kernel(rng: &mut impl Rng, n: usize) -> Kernel {
    let m = n + 1;
    Kernel::new(monotone_dense(rng, m) * 0.7 + lazy_walk(m) * 0.3).expect("valid kernel")
}

/// Random irreducible BD chain with `p_x ∈ up`, `q_x ∈ down` on the interior.
pub fn bd_chain(rng: &mut impl Rng, n: usize, up: (f64, f64), down: (f64, f64)) -> BDParams {
    let p: Vec<f64> = (0..=n).map(|x| if x < n { rng.random_range(up.0..up.1) } else { 0.0 }).collect();
    let q: Vec<f64> = (0..=n).map(|x| if x > 0 { rng.random_range(down.0..down.1) } else { 0.0 }).collect();
    BDParams::from_pq(p, q).expect("valid BD chain")
}

/// Random monotone irreducible BD chain (`p_x + q_{x+1} ≤ 0.9`).
pub fn monotone_bd(rng: &mut impl Rng, n: usize) -> BDParams {
    bd_chain(rng, n, (0.1, 0.45), (0.1, 0.45))
}

/// Doubly absorbing BD chain with interior rates in `[0.05, 0.5)`.
pub fn doubly_absorbing(rng: &mut impl Rng, n: usize) -> BDParams {
    let p: Vec<f64> = (0..=n).map(|x| if x > 0 && x < n { rng.random_range(0.05..0.5) } else { 0.0 }).collect();
    let q: Vec<f64> = (0..=n).map(|x| if x > 0 && x < n { rng.random_range(0.05..0.5) } else { 0.0 }).collect();
    let r = p.iter().zip(&q).map(|(a, b)| 1.0 - a - b).collect();
    BDParams::with_absorbing(p, q, r).expect("valid BD chain")
}

pub fn point(n: usize, at: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| if i == at { 1.0 } else { 0.0 })
}
