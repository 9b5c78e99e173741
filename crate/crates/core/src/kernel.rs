//! Kernels, probability vectors, communicating classes, stationary laws,
//! reversal, evolution and hitting probabilities.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tol::{EPS_NEG, EPS_SOLVE, EPS_STOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Stochastic,
    StrictlySubstochastic,
    GeneralNonnegative,
}

/// What the caller requires of the row sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demand {
    Any,
    Substochastic,
    Stochastic,
}

/// Dense nonnegative square matrix on states `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    m: DMatrix<f64>,
    kind: KernelKind,
}

/// Validate a raw matrix: square, finite, entries ≥ -εneg (then clamped).
pub fn validate_kernel(matrix: DMatrix<f64>, demand: Demand) -> Result<Kernel> {
    Kernel::with_demand(matrix, demand)
}

impl Kernel {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_demand(matrix, Demand::Any)
    }

    pub fn stochastic(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_demand(matrix, Demand::Stochastic)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn with_demand(mut m: DMatrix<f64>, demand: Demand) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
        }
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < -EPS_NEG {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
                if v < 0.0 {
                    m[(i, j)] = 0.0;
                }
            }
        }
        let sums: Vec<f64> = (0..m.nrows()).map(|i| m.row(i).sum()).collect();
        let over = sums.iter().enumerate().find(|(_, s)| **s > 1.0 + EPS_STOCH);
        let all_one = sums.iter().all(|s| (s - 1.0).abs() <= EPS_STOCH);
        let kind = if all_one {
            KernelKind::Stochastic
        } else if over.is_none() {
            KernelKind::StrictlySubstochastic
        } else {
            KernelKind::GeneralNonnegative
        };
        match demand {
            Demand::Any => {}
            Demand::Substochastic => {
                if let Some((row, &sum)) = over {
                    return Err(Error::RowSumExceedsOne { row, sum });
                }
            }
            Demand::Stochastic => {
                if let Some((row, &sum)) = over {
                    return Err(Error::RowSumExceedsOne { row, sum });
                }
                if let Some((row, &sum)) =
                    sums.iter().enumerate().find(|(_, s)| (**s - 1.0).abs() > EPS_STOCH)
                {
                    return Err(Error::NotStochastic { row, sum });
                }
            }
        }
        Ok(Kernel { m, kind })
    }

    pub fn identity(n: usize) -> Self {
        Kernel { m: DMatrix::identity(n, n), kind: KernelKind::Stochastic }
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Top state index `N = n - 1`.
    pub fn top(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn is_stochastic(&self) -> bool {
        self.kind == KernelKind::Stochastic
    }

    pub fn is_substochastic(&self) -> bool {
        self.kind != KernelKind::GeneralNonnegative
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.m[(x, y)]
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| self.m.row(i).sum())
    }

    pub fn is_absorbing(&self, a: usize) -> bool {
        (self.m[(a, a)] - 1.0).abs() <= EPS_STOCH
            && (0..self.n()).all(|y| y == a || self.m[(a, y)] <= EPS_NEG)
    }

    pub fn is_tridiagonal(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| i.abs_diff(j) <= 1 || self.m[(i, j)] == 0.0))
    }

    /// Restriction to a subset of states, in the given order.
    pub fn restrict(&self, states: &[usize]) -> Result<Kernel> {
        let k = states.len();
        Kernel::new(DMatrix::from_fn(k, k, |i, j| self.m[(states[i], states[j])]))
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::NonSquare { rows: n, cols: bad.len() });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Probability vector: nonnegative entries summing to one within εstoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(DVector<f64>);

impl ProbVector {
    pub fn new(mut v: DVector<f64>) -> Result<Self> {
        for (i, x) in v.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite { row: i, col: 0 });
            }
            if *x < -EPS_NEG {
                return Err(Error::NegativeEntry { row: i, col: 0, value: *x });
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s = v.sum();
        if (s - 1.0).abs() > EPS_STOCH {
            return Err(Error::NotStochastic { row: 0, sum: s });
        }
        Ok(ProbVector(v))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(v))
    }

    pub fn point(n: usize, at: usize) -> Self {
        ProbVector(DVector::from_fn(n, |i, _| if i == at { 1.0 } else { 0.0 }))
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector(DVector::from_element(n, 1.0 / n as f64))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    /// Cumulative vector `x ↦ Σ_{y≤x} v(y)`.
    pub fn cumulative(&self) -> DVector<f64> {
        cumulative(&self.0)
    }
}

impl Deref for ProbVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

pub fn cumulative(v: &DVector<f64>) -> DVector<f64> {
    let mut acc = 0.0;
    DVector::from_iterator(
        v.len(),
        v.iter().map(|x| {
            acc += x;
            acc
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecomposition {
    /// Classes in topological order; each sorted ascending.
    pub classes: Vec<Vec<usize>>,
    /// Indices into `classes` of the stochastic classes St(P).
    pub stochastic: Vec<usize>,
    pub absorbing: Vec<usize>,
    /// `class_of[x]` is the index of the class containing `x`.
    pub class_of: Vec<usize>,
}

impl ClassDecomposition {
    pub fn is_irreducible(&self) -> bool {
        self.classes.len() == 1
    }

    pub fn stochastic_classes(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.stochastic.iter().map(move |&i| &self.classes[i])
    }
}

fn edges(p: &Kernel) -> Vec<Vec<usize>> {
    let n = p.n();
    (0..n)
        .map(|x| (0..n).filter(|&y| y != x && p.get(x, y) > EPS_NEG).collect())
        .collect()
}

/// Iterative Tarjan; returns component id per vertex.
fn tarjan(adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![UNSEEN; n];
    let mut n_comp = 0;
    let mut counter = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = n_comp;
                        if w == v {
                            break;
                        }
                    }
                    n_comp += 1;
                }
            }
        }
    }
    (comp, n_comp)
}

/// Communicating classes in topological order, ties broken by the smallest
/// contained state.
pub fn classify(p: &Kernel) -> ClassDecomposition {
    let n = p.n();
    let adj = edges(p);
    let (comp, n_comp) = tarjan(&adj);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for x in 0..n {
        members[comp[x]].push(x);
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    let mut indeg = vec![0usize; n_comp];
    for x in 0..n {
        for &y in &adj[x] {
            let (a, b) = (comp[x], comp[y]);
            if a != b && !succ[a].contains(&b) {
                succ[a].push(b);
                indeg[b] += 1;
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n_comp)
        .filter(|&c| indeg[c] == 0)
        .map(|c| Reverse((members[c][0], c)))
        .collect();
    let mut order = Vec::with_capacity(n_comp);
    while let Some(Reverse((_, c))) = heap.pop() {
        order.push(c);
        for &d in &succ[c] {
            indeg[d] -= 1;
            if indeg[d] == 0 {
                heap.push(Reverse((members[d][0], d)));
            }
        }
    }

    let mut class_of = vec![0; n];
    let classes: Vec<Vec<usize>> = order.iter().map(|&c| members[c].clone()).collect();
    for (i, cl) in classes.iter().enumerate() {
        for &x in cl {
            class_of[x] = i;
        }
    }
    let stochastic = classes
        .iter()
        .enumerate()
        .filter(|(_, cl)| {
            cl.iter().all(|&x| {
                let s: f64 = cl.iter().map(|&y| p.get(x, y)).sum();
                (s - 1.0).abs() <= EPS_STOCH
            })
        })
        .map(|(i, _)| i)
        .collect();
    let absorbing = (0..n).filter(|&a| p.is_absorbing(a)).collect();
    ClassDecomposition { classes, stochastic, absorbing, class_of }
}

/// Stationary law of a stochastic irreducible kernel by dense LU on the
/// transposed balance system with the last equation replaced by
/// normalization.
pub fn stationary(p: &Kernel) -> Result<ProbVector> {
    if !p.is_stochastic() {
        let s = p.row_sums();
        let row = s.iter().position(|v| (v - 1.0).abs() > EPS_STOCH).unwrap_or(0);
        return Err(Error::NotStochastic { row, sum: s[row] });
    }
    let cd = classify(p);
    if !cd.is_irreducible() {
        return Err(Error::NotIrreducible { classes: cd.classes.len() });
    }
    stationary_unchecked(p.matrix())
}

pub(crate) fn stationary_unchecked(m: &DMatrix<f64>) -> Result<ProbVector> {
    let n = m.nrows();
    let mut a = m.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut pi = linalg::solve_vec(&a, &b)?;
    for v in pi.iter_mut() {
        if *v < 0.0 && *v > -EPS_NEG {
            *v = 0.0;
        }
    }
    let res = linalg::vec_inf(&(m.tr_mul(&pi) - &pi));
    if res > EPS_SOLVE {
        return Err(Error::SingularSystem);
    }
    ProbVector::new(pi)
}

/// Cesàro-averaged power iteration, the oracle for periodic chains.
pub fn cesaro_stationary(p: &Kernel, iterations: usize) -> DVector<f64> {
    let n = p.n();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut acc = DVector::zeros(n);
    for _ in 0..iterations {
        acc += &v;
        v = p.matrix().tr_mul(&v);
    }
    acc / iterations as f64
}

/// Time reversal `⃖P(x,y) = π(y) P(y,x) / π(x)`.
pub fn reversal(p: &Kernel, pi: &DVector<f64>) -> Result<Kernel> {
    if pi.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: pi.len() });
    }
    if let Some(state) = pi.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroStationaryEntry { state });
    }
    let n = p.n();
    Kernel::new(DMatrix::from_fn(n, n, |x, y| pi[y] * p.get(y, x) / pi[x]))
}

/// `π_n' = π_0' P^n`. Mass may decrease for substochastic `P`.
pub fn evolve(pi0: &DVector<f64>, p: &Kernel, n: usize) -> DVector<f64> {
    let mut v = pi0.clone();
    for _ in 0..n {
        v = p.matrix().tr_mul(&v);
    }
    v
}

/// `x ↦ P_x(T_target < killing time)` for substochastic `P`.
pub fn hitting_probabilities(p: &Kernel, target: &[usize]) -> Result<DVector<f64>> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if !p.is_substochastic() {
        let s = p.row_sums();
        let row = s.iter().position(|v| *v > 1.0 + EPS_STOCH).unwrap_or(0);
        return Err(Error::RowSumExceedsOne { row, sum: s[row] });
    }
    let n = p.n();
    let mut in_target = vec![false; n];
    for &t in target {
        if t >= n {
            return Err(Error::DimensionMismatch { expected: n, found: t + 1 });
        }
        in_target[t] = true;
    }
    // Backward reachability to the target.
    let adj = edges(p);
    let mut reaches = in_target.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for x in 0..n {
            if !reaches[x] && adj[x].iter().any(|&y| reaches[y]) {
                reaches[x] = true;
                changed = true;
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&x| reaches[x] && !in_target[x]).collect();
    let mut h = DVector::from_fn(n, |x, _| if in_target[x] { 1.0 } else { 0.0 });
    if free.is_empty() {
        return Ok(h);
    }
    let k = free.len();
    let a = DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - p.get(free[i], free[j])
    });
    let b = DVector::from_fn(k, |i, _| target.iter().map(|&t| p.get(free[i], t)).sum());
    let sol = linalg::solve_vec(&a, &b)?;
    for (i, &x) in free.iter().enumerate() {
        h[x] = sol[i].clamp(0.0, 1.0);
    }
    Ok(h)
}

/// `‖P h − h‖∞`.
pub fn check_harmonic(p: &Kernel, h: &DVector<f64>) -> Result<f64> {
    if h.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: h.len() });
    }
    Ok(linalg::vec_inf(&(p.matrix() * h - h)))
}
