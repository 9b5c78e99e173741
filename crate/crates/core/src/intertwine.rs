//! From a duality `H P̂' = P H` to an intertwining `P̃ Λ = Λ ⃖P`.

use nalgebra::{DMatrix, DVector};

use crate::duals::{verify_duality, DualFunction};
use crate::error::{Error, Result};
use crate::kernel::{self, Kernel, KernelKind, ProbVector};
use crate::linalg;
use crate::tol::{EPS_SOLVE, EPS_STOCH};

/// Residuals and flags for every identity of the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineDiagnostics {
    /// `‖H P̂' − P H‖∞`.
    pub duality_residual: f64,
    /// `‖P̂ H' D_π − H' D_π ⃖P‖∞`.
    pub part_i_residual: f64,
    /// `‖P̂ φ − φ‖∞`.
    pub phi_harmonic_residual: f64,
    /// `max |Λ 1 − 1|`.
    pub link_row_deviation: f64,
    /// `max |P̃ 1 − 1|`.
    pub p_tilde_row_deviation: f64,
    /// `‖P̃ Λ − Λ ⃖P‖∞`.
    pub intertwining_residual: f64,
    /// `‖K P̃' − P K‖∞`.
    pub k_duality_residual: f64,
    /// `‖⃖P − P‖∞`, zero for reversible inputs.
    pub reversal_deviation: f64,
    /// P̂ stochastic irreducible implies φ constant and P̃ = P̂.
    pub iv1: Option<bool>,
    /// Strictly substochastic P̂ is not irreducible.
    pub iv2: Option<bool>,
    /// `‖φ − Σ_l c_l P_·(T̂_{Î_l} < T̂)‖∞`.
    pub iv3_residual: Option<f64>,
    /// Largest deviation of φ from its mean on a stochastic class.
    pub iv3_class_spread: Option<f64>,
    /// With a unique stochastic class: `‖P̃ − D_h⁻¹ P̂ D_h‖∞`, `h` the
    /// probability of reaching that class before being killed.
    pub iv4_doob_residual: Option<f64>,
    pub absorbing_hat: Vec<usize>,
    pub absorbing_tilde: Vec<usize>,
    /// `(ã, ‖e_ã' Λ − π'‖∞)` for each absorbing `ã` of P̃.
    pub link_rows: Vec<(usize, f64)>,
    pub spectrum: SpectrumEquivalence,
}

impl PipelineDiagnostics {
    /// Names of the identities that fail their tolerance.
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let tol = EPS_SOLVE;
        if self.duality_residual > tol {
            out.push("duality");
        }
        if self.part_i_residual > tol {
            out.push("i");
        }
        if self.phi_harmonic_residual > tol {
            out.push("ii");
        }
        if self.link_row_deviation > EPS_STOCH || self.p_tilde_row_deviation > EPS_STOCH {
            out.push("iii.rows");
        }
        if self.intertwining_residual > tol {
            out.push("iii");
        }
        if self.k_duality_residual > tol {
            out.push("K");
        }
        if self.iv1 == Some(false) {
            out.push("iv1");
        }
        if self.iv2 == Some(false) {
            out.push("iv2");
        }
        if self.iv3_residual.is_some_and(|r| r > 1e-9) || self.iv3_class_spread.is_some_and(|r| r > tol) {
            out.push("iv3");
        }
        if self.iv4_doob_residual.is_some_and(|r| r > 1e-9) {
            out.push("iv4");
        }
        if self.absorbing_hat != self.absorbing_tilde || self.link_rows.iter().any(|(_, r)| *r > tol) {
            out.push("v");
        }
        if !self.spectrum.passes {
            out.push("vi");
        }
        out
    }

    pub fn all_pass(&self) -> bool {
        self.failed_checks().is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct IntertwiningResult {
    pub pi: ProbVector,
    /// `⃖P(x,y) = π(y) P(y,x) / π(x)`.
    pub reversed: Kernel,
    /// `φ = H' π`.
    pub phi: DVector<f64>,
    /// `Λ = D_φ⁻¹ H' D_π`.
    pub lambda: Kernel,
    /// `P̃ = D_φ⁻¹ P̂ D_φ`.
    pub p_tilde: Kernel,
    /// `K = H D_φ⁻¹`.
    pub k: DMatrix<f64>,
    /// `(class, c_l)` for each stochastic class of P̂ (substochastic P̂ only).
    pub class_constants: Vec<(Vec<usize>, f64)>,
    pub diagnostics: PipelineDiagnostics,
}

/// Build φ, Λ, P̃ and K from an `H`-duality and check every identity.
pub fn theorem1(p: &Kernel, h: &DualFunction, p_hat: &Kernel) -> Result<IntertwiningResult> {
    let n = p.n();
    if h.n() != n || p_hat.n() != n {
        return Err(Error::SizeMismatch { left: n, right: h.n().max(p_hat.n()) });
    }
    let hm = h.matrix();
    let duality = verify_duality(p, hm, p_hat.matrix(), 0)?;
    if duality.static_residual > EPS_STOCH {
        return Err(Error::DualityResidualTooLarge { residual: duality.static_residual });
    }
    let pi = kernel::stationary(p)?;
    let piv = pi.vector();
    let reversed = kernel::reversal(p, piv)?;
    let phi = hm.tr_mul(piv);
    if let Some(state) = phi.iter().position(|&v| v <= 0.0) {
        return Err(Error::PhiNotPositive { state, value: phi[state] });
    }

    let lambda_m = DMatrix::from_fn(n, n, |x, y| hm[(y, x)] * piv[y] / phi[x]);
    let link_row_deviation = row_deviation(&lambda_m);
    if link_row_deviation > EPS_STOCH {
        let row = worst_row(&lambda_m);
        return Err(Error::LinkNotStochastic { row, sum: lambda_m.row(row).sum() });
    }
    let pt = DMatrix::from_fn(n, n, |x, y| p_hat.get(x, y) * phi[y] / phi[x]);
    let p_tilde_row_deviation = row_deviation(&pt);
    if p_tilde_row_deviation > EPS_STOCH {
        let row = worst_row(&pt);
        return Err(Error::LinkNotStochastic { row, sum: pt.row(row).sum() });
    }
    let k = DMatrix::from_fn(n, n, |x, y| hm[(x, y)] / phi[y]);
    let lambda = Kernel::new(lambda_m)?;
    let p_tilde = Kernel::new(pt)?;

    let pm = p.matrix();
    let phm = p_hat.matrix();
    let ht_dpi = DMatrix::from_fn(n, n, |x, y| hm[(y, x)] * piv[y]);
    let part_i_residual = linalg::norm_inf(&(phm * &ht_dpi - &ht_dpi * reversed.matrix()));
    let phi_harmonic_residual = linalg::vec_inf(&(phm * &phi - &phi));
    let intertwining_residual =
        linalg::norm_inf(&(p_tilde.matrix() * lambda.matrix() - lambda.matrix() * reversed.matrix()));
    let k_duality_residual = linalg::norm_inf(&(&k * p_tilde.matrix().transpose() - pm * &k));
    let reversal_deviation = linalg::max_abs_diff(reversed.matrix(), pm);

    let mut iv1 = None;
    let mut iv2 = None;
    let mut iv3_residual = None;
    let mut iv3_class_spread = None;
    let mut iv4_doob_residual = None;
    let mut class_constants = Vec::new();
    if p_hat.is_substochastic() {
        let cd = kernel::classify(p_hat);
        if p_hat.is_stochastic() && cd.is_irreducible() {
            let c = phi[0];
            let flat = phi.iter().all(|v| (v - c).abs() <= 1e-9 * c.abs().max(1.0));
            iv1 = Some(flat && linalg::max_abs_diff(p_tilde.matrix(), phm) <= 1e-9);
        }
        if p_hat.kind() == KernelKind::StrictlySubstochastic {
            iv2 = Some(!cd.is_irreducible());
        }
        let classes: Vec<Vec<usize>> = cd.stochastic_classes().cloned().collect();
        if !classes.is_empty() {
            let mut recon = DVector::zeros(n);
            let mut spread: f64 = 0.0;
            let mut hits = Vec::new();
            for class in &classes {
                let c = class.iter().map(|&x| phi[x]).sum::<f64>() / class.len() as f64;
                for &x in class {
                    spread = spread.max((phi[x] - c).abs());
                }
                let hit = kernel::hitting_probabilities(p_hat, class)?;
                recon += &hit * c;
                hits.push(hit);
                class_constants.push((class.clone(), c));
            }
            iv3_residual = Some(linalg::vec_inf(&(&recon - &phi)));
            iv3_class_spread = Some(spread);
            if classes.len() == 1 {
                let hit = &hits[0];
                let doob = if hit.iter().all(|&v| v > 0.0) {
                    let d = DMatrix::from_fn(n, n, |x, y| phm[(x, y)] * hit[y] / hit[x]);
                    linalg::norm_inf(&(&d - p_tilde.matrix()))
                } else {
                    f64::INFINITY
                };
                iv4_doob_residual = Some(doob);
            }
        }
    }

    let absorbing_hat: Vec<usize> = (0..n).filter(|&a| p_hat.is_absorbing(a)).collect();
    let absorbing_tilde: Vec<usize> = (0..n).filter(|&a| p_tilde.is_absorbing(a)).collect();
    let link_rows = absorbing_tilde
        .iter()
        .map(|&a| Ok((a, link_row_check(&lambda, piv, &p_tilde, a)?)))
        .collect::<Result<Vec<_>>>()?;
    let spectrum = spectrum_equivalence(p, &p_tilde, n)?;

    let diagnostics = PipelineDiagnostics {
        duality_residual: duality.static_residual,
        part_i_residual,
        phi_harmonic_residual,
        link_row_deviation,
        p_tilde_row_deviation,
        intertwining_residual,
        k_duality_residual,
        reversal_deviation,
        iv1,
        iv2,
        iv3_residual,
        iv3_class_spread,
        iv4_doob_residual,
        absorbing_hat,
        absorbing_tilde,
        link_rows,
        spectrum,
    };
    Ok(IntertwiningResult { pi, reversed, phi, lambda, p_tilde, k, class_constants, diagnostics })
}

fn row_deviation(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| (m.row(i).sum() - 1.0).abs()).fold(0.0, f64::max)
}

fn worst_row(m: &DMatrix<f64>) -> usize {
    (0..m.nrows())
        .max_by(|&a, &b| {
            let da = (m.row(a).sum() - 1.0).abs();
            let db = (m.row(b).sum() - 1.0).abs();
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

/// `‖e_ã' Λ − π'‖∞` for an absorbing state `ã` of P̃.
pub fn link_row_check(lambda: &Kernel, pi: &DVector<f64>, p_tilde: &Kernel, a: usize) -> Result<f64> {
    if a >= p_tilde.n() || !p_tilde.is_absorbing(a) {
        return Err(Error::NotAbsorbing { state: a });
    }
    if pi.len() != lambda.n() {
        return Err(Error::DimensionMismatch { expected: lambda.n(), found: pi.len() });
    }
    Ok((0..pi.len()).map(|y| (lambda.get(a, y) - pi[y]).abs()).fold(0.0, f64::max))
}

/// Strictly positive constant columns `H e_â = c 1`, as `(â, c)`.
pub fn constant_column_check(h: &DualFunction) -> Vec<(usize, f64)> {
    let m = h.matrix();
    (0..m.ncols())
        .filter_map(|a| {
            let c = m[(0, a)];
            let constant = c > 0.0 && m.column(a).iter().all(|v| (v - c).abs() <= 1e-12 * c);
            constant.then_some((a, c))
        })
        .collect()
}

/// Every constant column of `H` is an absorbing state of `P̂`; returns
/// `(â, absorbing)` per constant column.
pub fn constant_columns_absorbing(h: &DualFunction, p_hat: &Kernel) -> Vec<(usize, bool)> {
    constant_column_check(h).into_iter().map(|(a, _)| (a, p_hat.is_absorbing(a))).collect()
}

/// For every absorbing `x0` of `P`, `(x0, ‖P̂ H(x0,·)' − H(x0,·)'‖∞)`.
pub fn absorbing_harmonic_check(p: &Kernel, h: &DualFunction, p_hat: &Kernel) -> Result<Vec<(usize, f64)>> {
    (0..p.n())
        .filter(|&x| p.is_absorbing(x))
        .map(|x0| {
            let row = h.matrix().row(x0).transpose();
            Ok((x0, kernel::check_harmonic(p_hat, &row)?))
        })
        .collect()
}

/// Inverse construction: from `P̃ Λ = Λ ⃖P` recover `H = D_π⁻¹ Λ'` and
/// `P̂ = P̃`, for which `φ = H' π = 1`.
pub fn duality_from_intertwining(
    p: &Kernel,
    p_tilde: &Kernel,
    lambda: &Kernel,
    pi: &DVector<f64>,
) -> Result<(DualFunction, Kernel)> {
    let n = p.n();
    if p_tilde.n() != n || lambda.n() != n {
        return Err(Error::SizeMismatch { left: n, right: p_tilde.n().max(lambda.n()) });
    }
    let reversed = kernel::reversal(p, pi)?;
    let residual =
        linalg::norm_inf(&(p_tilde.matrix() * lambda.matrix() - lambda.matrix() * reversed.matrix()));
    if residual > EPS_SOLVE {
        return Err(Error::IntertwiningResidualTooLarge { residual });
    }
    let h = DualFunction::custom(DMatrix::from_fn(n, n, |x, y| lambda.get(y, x) / pi[x]))?;
    let check = verify_duality(p, h.matrix(), p_tilde.matrix(), 0)?;
    if check.static_residual > EPS_SOLVE {
        return Err(Error::DualityResidualTooLarge { residual: check.static_residual });
    }
    Ok((h, p_tilde.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEquivalence {
    pub traces_p: Vec<f64>,
    pub traces_tilde: Vec<f64>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Compare `tr(P^m)` and `tr(P̃^m)` for `m = 1..=m_max`. Equal power traces
/// up to the matrix size pin down the characteristic polynomial.
pub fn spectrum_equivalence(p: &Kernel, p_tilde: &Kernel, m_max: usize) -> Result<SpectrumEquivalence> {
    if p.n() != p_tilde.n() {
        return Err(Error::SizeMismatch { left: p.n(), right: p_tilde.n() });
    }
    let traces_p = linalg::power_traces(p.matrix(), m_max);
    let traces_tilde = linalg::power_traces(p_tilde.matrix(), m_max);
    let max_deviation = traces_p.iter().zip(&traces_tilde).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let tolerance = 1e-8 * p.n() as f64;
    Ok(SpectrumEquivalence { traces_p, traces_tilde, max_deviation, tolerance, passes: max_deviation <= tolerance })
}

/// `‖(1/k) Σ_{n<k} P^n H − 1 φ'‖∞`.
pub fn cesaro_phi_check(p: &Kernel, h: &DualFunction, phi: &DVector<f64>, k: usize) -> f64 {
    let n = p.n();
    let mut m = h.matrix().clone();
    let mut acc = DMatrix::zeros(n, n);
    for _ in 0..k {
        acc += &m;
        m = p.matrix() * &m;
    }
    acc /= k as f64;
    let target = DMatrix::from_fn(n, n, |_, y| phi[y]);
    linalg::max_abs_diff(&acc, &target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::BDParams;
    use crate::duals::{dual_function, siegmund_dual, DualFamily};

    fn chain_a() -> Kernel {
        Kernel::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap()
    }

    fn chain_b() -> Kernel {
        BDParams::new(vec![0.2, 0.3, 0.0], vec![0.0, 0.1, 0.2], vec![0.8, 0.6, 0.8]).unwrap().kernel()
    }

    fn siegmund(p: &Kernel) -> IntertwiningResult {
        let rep = siegmund_dual(p).unwrap();
        let h = dual_function(DualFamily::Siegmund, p.top()).unwrap();
        theorem1(p, &h, rep.kernel().unwrap()).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &[f64], tol: f64) -> bool {
        a.nrows() * a.ncols() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn chain_a_pipeline() {
        let r = siegmund(&chain_a());
        assert!((r.phi[0] - 0.4).abs() < 1e-15 && (r.phi[1] - 1.0).abs() < 1e-15);
        // nalgebra stores column-major.
        assert!(close(r.lambda.matrix(), &[1.0, 0.4, 0.0, 0.6], 1e-15));
        assert!(close(r.p_tilde.matrix(), &[0.5, 0.0, 0.5, 1.0], 1e-15));
        assert!(close(&r.k, &[2.5, 0.0, 1.0, 1.0], 1e-14));
        assert!(r.diagnostics.all_pass(), "{:?}", r.diagnostics.failed_checks());
        assert_eq!(r.diagnostics.link_rows.len(), 1);
        assert!(r.diagnostics.link_rows[0].1 < 1e-15);
        let s = &r.diagnostics.spectrum;
        assert!((s.traces_p[0] - 1.5).abs() < 1e-15 && (s.traces_p[1] - 1.25).abs() < 1e-15);
        assert_eq!(r.class_constants, vec![(vec![1], 1.0)]);
    }

    #[test]
    fn chain_b_pipeline() {
        let r = siegmund(&chain_b());
        let want = [1.0 / 6.0, 0.5, 1.0];
        assert!(r.phi.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let row: Vec<f64> = (0..3).map(|y| r.p_tilde.get(1, y)).collect();
        assert!(row.iter().zip([0.1, 0.5, 0.4]).all(|(a, b)| (a - b).abs() < 1e-14));
        let l = link_row_check(&r.lambda, r.pi.vector(), &r.p_tilde, 2).unwrap();
        assert!(l < 1e-15);
        assert!(r.diagnostics.all_pass(), "{:?}", r.diagnostics.failed_checks());
        assert!(r.diagnostics.spectrum.max_deviation < 1e-12);
        // Siegmund link: Λ(x,y) = 1(x ≥ y) π(y) / π^c(x).
        for x in 0..3 {
            for y in 0..3 {
                let want = if x >= y { r.pi[y] / r.phi[x] } else { 0.0 };
                assert!((r.lambda.get(x, y) - want).abs() < 1e-15);
            }
        }
        assert!(matches!(link_row_check(&r.lambda, r.pi.vector(), &r.p_tilde, 0), Err(Error::NotAbsorbing { .. })));
    }

    #[test]
    fn stochastic_irreducible_dual_gives_constant_phi() {
        // Reversal as a duality: H = D_π⁻¹, P̂ = P for reversible P.
        let p = chain_b();
        let pi = kernel::stationary(&p).unwrap();
        let h = DualFunction::custom(DMatrix::from_diagonal(&pi.vector().map(|v| 1.0 / v))).unwrap();
        let r = theorem1(&p, &h, &p).unwrap();
        assert!(r.phi.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(r.diagnostics.iv1, Some(true));
        assert!(linalg::max_abs_diff(r.p_tilde.matrix(), p.matrix()) < 1e-12);
    }

    #[test]
    fn doob_transform_and_class_constants() {
        let r = siegmund(&chain_b());
        let d = &r.diagnostics;
        assert_eq!(d.iv2, Some(true));
        assert!(d.iv3_residual.unwrap() < 1e-12);
        assert!(d.iv4_doob_residual.unwrap() < 1e-12);
        assert_eq!(d.absorbing_hat, vec![2]);
        assert_eq!(d.absorbing_tilde, vec![2]);
    }

    #[test]
    fn scale_invariance() {
        let p = chain_b();
        let base = siegmund(&p);
        let rep = siegmund_dual(&p).unwrap();
        let h = dual_function(DualFamily::Siegmund, 2).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let r = theorem1(&p, &h.scaled(c), rep.kernel().unwrap()).unwrap();
            assert!(linalg::max_abs_diff(r.lambda.matrix(), base.lambda.matrix()) < 1e-12);
            assert!(linalg::max_abs_diff(r.p_tilde.matrix(), base.p_tilde.matrix()) < 1e-12);
        }
    }

    #[test]
    fn constant_columns() {
        let cols = |f| constant_column_check(&dual_function(f, 4).unwrap());
        assert_eq!(cols(DualFamily::Hypergeometric), vec![(0, 1.0)]);
        assert_eq!(cols(DualFamily::Siegmund), vec![(4, 1.0)]);
        assert_eq!(cols(DualFamily::Vandermonde), vec![(0, 1.0)]);
        let p = chain_b();
        let rep = siegmund_dual(&p).unwrap();
        let h = dual_function(DualFamily::Siegmund, 2).unwrap();
        assert_eq!(constant_columns_absorbing(&h, rep.kernel().unwrap()), vec![(2, true)]);
    }

    #[test]
    fn round_trip() {
        let p = chain_a();
        let r = siegmund(&p);
        let (h, p_hat) = duality_from_intertwining(&p, &r.p_tilde, &r.lambda, r.pi.vector()).unwrap();
        let again = theorem1(&p, &h, &p_hat).unwrap();
        assert!(again.phi.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(linalg::max_abs_diff(again.lambda.matrix(), r.lambda.matrix()) < 1e-12);
        assert!(linalg::max_abs_diff(again.p_tilde.matrix(), r.p_tilde.matrix()) < 1e-12);
        // Identity link.
        let id = Kernel::identity(2);
        let (h, _) = duality_from_intertwining(&p, &r.reversed, &id, r.pi.vector()).unwrap();
        assert!((h.matrix()[(0, 0)] - 2.5).abs() < 1e-12 && h.matrix()[(0, 1)] == 0.0);
        assert!(matches!(
            duality_from_intertwining(&p, &id, &r.lambda, r.pi.vector()),
            Err(Error::IntertwiningResidualTooLarge { .. })
        ));
    }

    #[test]
    fn identity_traces() {
        let s = spectrum_equivalence(&Kernel::identity(3), &Kernel::identity(3), 3).unwrap();
        assert_eq!(s.traces_p, vec![3.0, 3.0, 3.0]);
        assert!(spectrum_equivalence(&Kernel::identity(3), &Kernel::identity(2), 3).is_err());
    }

    #[test]
    fn cesaro_limit() {
        let p = chain_b();
        let r = siegmund(&p);
        let h = dual_function(DualFamily::Siegmund, 2).unwrap();
        assert!(cesaro_phi_check(&p, &h, &r.phi, 10_000) < 1e-3);
    }

    #[test]
    fn absorbing_rows_are_harmonic() {
        let p = BDParams::with_absorbing(vec![0.0, 0.4, 0.0], vec![0.0, 0.3, 0.0], vec![1.0, 0.3, 1.0])
            .unwrap()
            .kernel();
        let rep = siegmund_dual(&p).unwrap();
        let h = dual_function(DualFamily::Siegmund, 2).unwrap();
        let checks = absorbing_harmonic_check(&p, &h, rep.kernel().unwrap()).unwrap();
        assert_eq!(checks.len(), 2);
        assert!(checks.iter().all(|(_, r)| *r < 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let p = chain_a();
        let h = dual_function(DualFamily::Siegmund, 1).unwrap();
        assert!(matches!(theorem1(&p, &h, &p), Err(Error::DualityResidualTooLarge { .. })));
    }
}
