//! Consolidated check of the whole pipeline, keyed by identity name.

use dualchain::coupling;
use dualchain::duals::{self, DualFamily};
use dualchain::intertwine;
use dualchain::spectral;
use dualchain::ssd;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::commands::{compute_dual, limits, ssd_run, start_is_point_zero, Ctx};
use crate::error::{CliError, CliResult};
use crate::output::num;

const TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Infeasible,
    Skipped,
}

#[derive(Default)]
struct Report {
    keys: Map<String, Value>,
    failed: bool,
}

impl Report {
    fn put(&mut self, key: &str, status: Status, value: Option<f64>, detail: impl Into<String>) {
        self.failed |= status == Status::Fail;
        let mut entry = json!({ "status": status });
        if let Some(v) = value {
            entry["value"] = json!(v);
        }
        let detail = detail.into();
        if !detail.is_empty() {
            entry["detail"] = json!(detail);
        }
        self.keys.insert(key.to_string(), entry);
    }

    fn check(&mut self, key: &str, value: f64, tol: f64, detail: &str) {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        self.put(key, status, Some(value), format!("{detail} (tolerance {tol:e})"));
    }

    fn flag(&mut self, key: &str, ok: bool, detail: impl Into<String>) {
        self.put(key, if ok { Status::Pass } else { Status::Fail }, None, detail);
    }

    fn skip(&mut self, keys: &[&str], why: &str) {
        for k in keys {
            self.put(k, Status::Skipped, None, why);
        }
    }
}

const DOWNSTREAM: &[&str] = &[
    "Thm1.i", "Thm1.ii", "Thm1.iii", "Thm1.iv", "Thm1.v", "Thm1.vi", "Thm1.K", "Eq34", "Eq38", "Eq35",
];

pub fn run(ctx: &mut Ctx) -> CliResult<()> {
    let mut rep = Report::default();
    let outcome = fill(ctx, &mut rep);
    let infeasible = matches!(outcome, Err(CliError::Infeasible(_)));
    let summary = json!({
        "family": ctx.cfg.family()?.name(),
        "states": ctx.states(),
        "pass": outcome.is_ok() && !rep.failed,
        "checks": Value::Object(rep.keys.clone()),
    });
    ctx.out.json("verify.json", &summary)?;
    for (k, v) in &rep.keys {
        println!("{k}: {}", v["status"].as_str().unwrap_or("?"));
    }
    outcome?;
    if rep.failed && !infeasible {
        let failed: Vec<&String> = rep.keys.iter().filter(|(_, v)| v["status"] == "fail").map(|(k, _)| k).collect();
        return Err(CliError::CheckFailed(format!("{failed:?}")));
    }
    Ok(())
}

fn fill(ctx: &mut Ctx, rep: &mut Report) -> CliResult<()> {
    let family = ctx.cfg.family()?;
    let (h, dual) = compute_dual(ctx)?;
    let p = ctx.p().clone();
    let dual_res = duals::verify_duality(&p, h.matrix(), &dual.p_hat_raw, 20).map_err(|e| CliError::module("verify", e))?;
    if !dual.feasible {
        rep.put(
            "Eq8",
            Status::Infeasible,
            Some(dual_res.static_residual),
            format!("{} violation(s) of the feasibility conditions", dual.violated.len()),
        );
        rep.skip(DOWNSTREAM, "dual infeasible");
        return Err(CliError::Infeasible(format!("{} dual of this chain", family.name())));
    }
    let (st, dy) = (dual_res.static_residual, dual_res.dynamic_residual);
    let status = if st <= TOL && dy <= 1e-9 { Status::Pass } else { Status::Fail };
    rep.put("Eq8", status, Some(st), format!("H P̂' = P H: static {st:e} (tolerance 1e-10), n <= 20 {dy:e} (tolerance 1e-9)"));

    if matches!(family, DualFamily::Hypergeometric) {
        let col0 = (0..h.n()).map(|x| (h.matrix()[(x, 0)] - 1.0).abs()).fold(0.0, f64::max);
        rep.check("Eq42prime", col0, 0.0, "H e_0 = 1");
    }

    let p_hat = dual.kernel().map_err(|e| CliError::module("verify", e))?.clone();
    let r = match intertwine::theorem1(&p, &h, &p_hat) {
        Ok(r) => r,
        Err(e) => {
            rep.put("Thm1.ii", Status::Fail, None, e.to_string());
            rep.skip(&DOWNSTREAM[2..], "pipeline could not be built");
            return Ok(());
        }
    };
    let d = &r.diagnostics;
    rep.check("Thm1.i", d.part_i_residual, TOL, "P̂ H' D_π = H' D_π ⃖P");
    rep.check("Thm1.ii", d.phi_harmonic_residual, TOL, "P̂ φ = φ");
    rep.check(
        "Thm1.iii",
        d.intertwining_residual.max(d.link_row_deviation).max(d.p_tilde_row_deviation),
        TOL,
        "P̃ Λ = Λ ⃖P with stochastic Λ, P̃",
    );
    let iv_ok = d.iv1 != Some(false)
        && d.iv2 != Some(false)
        && !d.iv3_residual.is_some_and(|v| v > 1e-9)
        && !d.iv4_doob_residual.is_some_and(|v| v > 1e-9);
    rep.flag("Thm1.iv", iv_ok, format!("iv1 {:?}, iv2 {:?}, iv3 {:?}, iv4 {:?}", d.iv1, d.iv2, d.iv3_residual, d.iv4_doob_residual));
    let link = d.link_rows.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    rep.flag(
        "Thm1.v",
        d.absorbing_hat == d.absorbing_tilde && link <= TOL,
        format!("absorbing {:?}, link row deviation {link:e}", d.absorbing_tilde),
    );
    rep.check("Thm1.vi", d.spectrum.max_deviation, d.spectrum.tolerance, "power traces of P and P̃");
    rep.check("Thm1.K", d.k_duality_residual, TOL, "K P̃' = P K");

    let n_sep = ctx.n_max(200);
    let run = match ssd_run(ctx, &r, n_sep) {
        Ok(run) => run,
        Err(e) => {
            rep.put("Eq34", Status::Skipped, None, e.to_string());
            rep.skip(&["Eq38", "Eq35"], "no admissible start");
            return Ok(());
        }
    };
    let s = &run.sharpness;
    rep.flag("Eq34", s.inequality_holds, format!("sep <= survival for n <= {n_sep}"));
    match s.witness {
        Some(w) => {
            rep.put("Prop9", Status::Pass, None, format!("witness d = {w}, absorbing state {}", s.partial));
            rep.check("Eq38", s.max_gap, 1e-9, "sep = survival");
        }
        None => {
            rep.put("Prop9", Status::Skipped, None, "no witness column in Λ");
            rep.put("Eq38", Status::Skipped, None, "equality needs a witness");
        }
    }
    let cond = ssd::sharpness_conditions(&h, &r.lambda, r.pi.vector(), s.partial);
    if !cond.h_row_witnesses.is_empty() || matches!(family, DualFamily::Hypergeometric) {
        rep.flag("Prop9prime", cond.pair_condition, format!("H row witnesses {:?}", cond.h_row_witnesses));
    }

    let pb = coupling::coupling_kernel(&r.reversed, &r.p_tilde, &r.lambda).map_err(|e| CliError::module("coupling", e))?;
    let init = coupling::product_initial(&r.lambda, &run.pi_tilde_0);
    match coupling::exact_joint(&pb, &r.reversed, &r.p_tilde, &r.lambda, &init, Some(s.partial), 20, limits()) {
        Ok(j) => rep.check(
            "Eq35",
            j.conditional_deviation.max(j.path_deviation).max(j.absorbed_path_deviation),
            TOL,
            &format!("conditional law of X given the X̃ path, {} paths", j.paths_checked),
        ),
        Err(e) => rep.put("Eq35", Status::Skipped, None, e.to_string()),
    }

    // Three-way absorption agreement for BD chains started at 0 with the
    // Siegmund link, where the spectral route applies.
    if let (Some(bd), DualFamily::Siegmund) = (&ctx.chain.bd, &family) {
        if bd.is_irreducible() && start_is_point_zero(&run.pi0) {
            three_way(rep, bd, &r, &run.absorption)?;
        }
    }
    let rows: Vec<Vec<String>> = s.rows.iter().map(|(n, a, b)| vec![n.to_string(), num(*a), num(*b)]).collect();
    ctx.out.table("sharpness.csv", &["n", "separation", "survival"], &rows)?;
    Ok(())
}

fn three_way(
    rep: &mut Report,
    bd: &dualchain::chains::BDParams,
    r: &intertwine::IntertwiningResult,
    exact: &ssd::AbsorptionStats,
) -> CliResult<()> {
    let m = |e| CliError::module("absorption", e);
    let spec = spectral::bd_spectrum(bd).map_err(m)?;
    let n_max = exact.pmf.len() - 1;
    let spectral = ssd::absorption_spectral(&spec, n_max).map_err(m)?;
    let rec = ssd::upward_bd(&r.p_tilde).and_then(|u| ssd::absorption_recurrence(&u, n_max)).map_err(m)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let moments = [spectral.mean, rec.mean]
        .iter()
        .map(|v| rel(*v, exact.mean))
        .chain([spectral.variance, rec.variance].iter().map(|v| rel(*v, exact.variance)))
        .fold(0.0, f64::max);
    let pmf = spectral.pmf_distance(exact).max(rec.pmf_distance(exact));
    rep.check("Eq41", moments, 1e-8, "spectral, matrix-power and recurrence moments, relative");
    rep.check("Eq41.pmf", pmf, 1e-9, "pmf sup distance across the three routes");
    let (mean, var) = ssd::spectral_moments(&spec).map_err(m)?;
    rep.flag("Eq42", var <= mean / spec.gap * (1.0 + 1e-12), format!("Var {var:e} <= E/(1-t1) {:e}", mean / spec.gap));
    Ok(())
}
