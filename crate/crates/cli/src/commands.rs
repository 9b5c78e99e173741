use dualchain::coupling::{self, PathLimits};
use dualchain::duals::{self, exact, DualFamily, DualFunction, DualReport};
use dualchain::intertwine::{self, IntertwiningResult};
use dualchain::kernel::{self, classify};
use dualchain::spectral;
use dualchain::ssd::{self, AbsorptionStats, SharpnessReport};
use dualchain::Kernel;
use nalgebra::DVector;
use serde_json::json;

use crate::config::{Chain, ChainKind, Config};
use crate::error::{CliError, CliResult};
use crate::output::{num, Out};
use crate::verify;

pub const COMMANDS: &[&str] = &["build", "dual", "intertwine", "spectrum", "ssd", "simulate", "cutoff", "verify", "plotdata"];

/// Command-line overrides of `[options]`.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    pub trials: Option<usize>,
    pub series: Option<String>,
}

pub struct Ctx {
    pub cfg: Config,
    pub chain: Chain,
    pub out: Out,
    pub flags: Flags,
}

impl Ctx {
    pub fn n_max(&self, default: usize) -> usize {
        self.flags.n_max.or(self.cfg.options.n_max).unwrap_or(default)
    }

    pub fn p(&self) -> &Kernel {
        &self.chain.kernel
    }

    pub fn states(&self) -> usize {
        self.chain.kernel.n()
    }
}

pub fn run(command: &str, ctx: &mut Ctx) -> CliResult<()> {
    match command {
        "build" => build(ctx),
        "dual" => dual_cmd(ctx),
        "intertwine" => intertwine_cmd(ctx),
        "spectrum" => spectrum_cmd(ctx),
        "ssd" => ssd_cmd(ctx),
        "simulate" => simulate_cmd(ctx),
        "cutoff" => cutoff_cmd(ctx),
        "verify" => verify::run(ctx),
        "plotdata" => plotdata(ctx),
        other => Err(CliError::UnknownCommand(other.to_string())),
    }
}

fn build(ctx: &mut Ctx) -> CliResult<()> {
    let p = ctx.p().clone();
    let classes = classify(&p);
    let stationary = kernel::stationary(&p).ok().map(|s| s.into_vector().iter().copied().collect::<Vec<_>>());
    let bd = ctx.chain.bd.as_ref().map(|b| json!({ "p": b.p, "q": b.q, "r": b.r, "monotone": b.is_monotone() }));
    let summary = json!({
        "states": p.n(),
        "stochastic": p.is_stochastic(),
        "tridiagonal": p.is_tridiagonal(),
        "irreducible": classes.is_irreducible(),
        "classes": classes.classes,
        "monotone": duals::is_monotone(&p),
        "stationary": stationary,
        "birth_death": bd,
        "exact": ctx.chain.exact.is_some(),
    });
    ctx.out.matrix("kernel.csv", p.matrix())?;
    ctx.out.json("build.json", &summary)
}

/// `H` and the dual report for the configured family. Mutation models with
/// hypergeometric or Vandermonde `H` are solved in exact arithmetic.
pub fn compute_dual(ctx: &Ctx) -> CliResult<(DualFunction, DualReport)> {
    let family = ctx.cfg.family()?;
    let p = ctx.p();
    let m = |e| CliError::module("dual", e);
    let h = duals::dual_function(family.clone(), p.top()).map_err(m)?;
    let report = match &family {
        DualFamily::Siegmund => duals::siegmund_dual(p).map_err(m)?,
        DualFamily::Ultrametric { k, alpha, beta } => duals::ultrametric_dual(p, *k, *alpha, *beta).map_err(m)?,
        DualFamily::Hypergeometric | DualFamily::Vandermonde if ctx.chain.exact.is_some() => {
            exact::exact_dual_report(ctx.chain.exact.as_ref().expect("checked"), family.clone()).map_err(m)?.1
        }
        _ => duals::dual_via_solve(p, &h).map_err(m)?,
    };
    Ok((h, report))
}

fn infeasible(rep: &DualReport) -> CliError {
    let first = rep.violated.first().map(|v| format!("{v:?}")).unwrap_or_else(|| "dual is not a kernel".into());
    CliError::Infeasible(format!("{} violation(s), first {first}", rep.violated.len()))
}

fn dual_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let (h, rep) = compute_dual(ctx)?;
    let n_dyn = ctx.n_max(20);
    let res = duals::verify_duality(ctx.p(), h.matrix(), &rep.p_hat_raw, n_dyn).map_err(|e| CliError::module("dual", e))?;
    let summary = json!({
        "family": h.family().name(),
        "feasible": rep.feasible,
        "substochastic": rep.feasible && rep.is_substochastic(),
        "leak0": rep.mass_leaks.first().copied(),
        "mass_leaks": rep.mass_leaks,
        "static_residual": res.static_residual,
        "dynamic_residual": res.dynamic_residual,
        "dynamic_steps": n_dyn,
        "violations": rep.violated.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
        "notes": rep.notes,
    });
    ctx.out.matrix("p_hat.csv", &rep.p_hat_raw)?;
    ctx.out.matrix("h.csv", h.matrix())?;
    ctx.out.json("dual.json", &summary)?;
    if !rep.feasible {
        return Err(infeasible(&rep));
    }
    Ok(())
}

/// Dual, then the intertwining pipeline. Infeasible duals stop here.
pub fn pipeline(ctx: &Ctx) -> CliResult<(DualFunction, DualReport, IntertwiningResult)> {
    let (h, rep) = compute_dual(ctx)?;
    let p_hat = match rep.kernel() {
        Ok(k) if rep.feasible => k.clone(),
        _ => return Err(infeasible(&rep)),
    };
    let r = intertwine::theorem1(ctx.p(), &h, &p_hat).map_err(|e| CliError::module("intertwine", e))?;
    Ok((h, rep, r))
}

fn intertwine_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let (h, _, r) = pipeline(ctx)?;
    let d = &r.diagnostics;
    let summary = json!({
        "family": h.family().name(),
        "pi": r.pi.vector().as_slice(),
        "phi": r.phi.as_slice(),
        "duality_residual": d.duality_residual,
        "part_i_residual": d.part_i_residual,
        "phi_harmonic_residual": d.phi_harmonic_residual,
        "link_row_deviation": d.link_row_deviation,
        "p_tilde_row_deviation": d.p_tilde_row_deviation,
        "intertwining_residual": d.intertwining_residual,
        "k_duality_residual": d.k_duality_residual,
        "reversal_deviation": d.reversal_deviation,
        "absorbing_hat": d.absorbing_hat,
        "absorbing_tilde": d.absorbing_tilde,
        "link_rows": d.link_rows,
        "trace_deviation": d.spectrum.max_deviation,
        "iv1": d.iv1, "iv2": d.iv2, "iv3_residual": d.iv3_residual, "iv4_doob_residual": d.iv4_doob_residual,
        "class_constants": r.class_constants,
        "failed_checks": d.failed_checks(),
        "all_pass": d.all_pass(),
    });
    ctx.out.matrix("lambda.csv", r.lambda.matrix())?;
    ctx.out.matrix("p_tilde.csv", r.p_tilde.matrix())?;
    ctx.out.matrix("k.csv", &r.k)?;
    ctx.out.matrix("reversed.csv", r.reversed.matrix())?;
    ctx.out.json("intertwine.json", &summary)?;
    if !d.all_pass() {
        return Err(CliError::CheckFailed(format!("pipeline identities {:?}", d.failed_checks())));
    }
    Ok(())
}

fn bd_params(ctx: &Ctx) -> CliResult<&dualchain::chains::BDParams> {
    ctx.chain.bd.as_ref().ok_or_else(|| CliError::Unsupported("this command needs a birth-death chain".into()))
}

fn spectrum_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let params = bd_params(ctx)?.clone();
    let m = |e| CliError::module("spectrum", e);
    let spec = spectral::spectral_weights(&params).map_err(m)?;
    let prop5 = spectral::prop5_checks(&params).map_err(m)?;
    let (mu0, total) = spectral::weight_checks(&params, &spec).map_err(m)?;
    let closed = match (ctx.chain.kind, ctx.chain.mutation) {
        (ChainKind::MoranMutation | ChainKind::BernoulliLaplace, Some((a1, a2))) => {
            let f = spectral::moran_mutation_spectrum(params.n, a1, a2);
            Some(spec.eigenvalues.iter().zip(&f.eigenvalues).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        }
        _ => None,
    };
    let weights = spec.weights.clone().unwrap_or_default();
    let rows: Vec<Vec<String>> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &t)| vec![k.to_string(), num(t), weights.get(k).map(|&w| num(w)).unwrap_or_default()])
        .collect();
    let summary = json!({
        "eigenvalues": spec.eigenvalues,
        "gap": spec.gap,
        "min_eigenvalue": spec.min_eigenvalue(),
        "min_separation": spec.min_separation(),
        "weight_mu0_deviation": mu0,
        "weight_sum_deviation": total,
        "monotone": prop5.monotone,
        "nonneg_implies_monotone": prop5.nonneg_implies_monotone,
        "half_holding_implies_positive": prop5.half_holding_implies_positive,
        "converse_fails": prop5.converse_fails,
        "closed_form_deviation": closed,
    });
    ctx.out.table("spectrum.csv", &["k", "eigenvalue", "weight"], &rows)?;
    ctx.out.json("spectrum.json", &summary)
}

/// Sharpness table and absorption law for the configured start.
pub struct SsdRun {
    pub pi0: DVector<f64>,
    pub pi_tilde_0: DVector<f64>,
    pub sharpness: SharpnessReport,
    pub absorption: AbsorptionStats,
}

pub fn ssd_run(ctx: &Ctx, r: &IntertwiningResult, n_sep: usize) -> CliResult<SsdRun> {
    let m = |e| CliError::module("ssd", e);
    let pi0 = ctx.cfg.start(ctx.states())?;
    let adm = ssd::admissible_initials(&r.lambda, &pi0).map_err(m)?;
    let pi_tilde_0 = adm.pi_tilde_0;
    let sharpness = ssd::verify_sharpness(&r.reversed, &r.p_tilde, &r.lambda, &pi0, &pi_tilde_0, n_sep).map_err(m)?;
    let partial = sharpness.partial;
    let n_abs = ssd::default_n_max(&r.p_tilde, &pi_tilde_0, partial).max(n_sep);
    let absorption = ssd::absorption_exact(&r.p_tilde, &pi_tilde_0, partial, n_abs).map_err(m)?;
    Ok(SsdRun { pi0, pi_tilde_0, sharpness, absorption })
}

fn ssd_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let (_, _, r) = pipeline(ctx)?;
    let run = ssd_run(ctx, &r, ctx.n_max(200))?;
    let s = &run.sharpness;
    let a = &run.absorption;
    let sep_rows: Vec<Vec<String>> =
        s.rows.iter().map(|(n, sep, surv)| vec![n.to_string(), num(*sep), num(*surv)]).collect();
    let abs_rows: Vec<Vec<String>> =
        (0..a.pmf.len()).map(|n| vec![n.to_string(), num(a.pmf[n]), num(a.survival[n])]).collect();
    let summary = json!({
        "pi0": run.pi0.as_slice(),
        "pi_tilde_0": run.pi_tilde_0.as_slice(),
        "absorbing_state": s.partial,
        "witness": s.witness,
        "inequality_holds": s.inequality_holds,
        "sharp": s.sharp,
        "max_gap": s.max_gap,
        "mean": a.mean,
        "variance": a.variance,
        "truncation_mass": a.truncation_mass,
    });
    ctx.out.table("sharpness.csv", &["n", "separation", "survival"], &sep_rows)?;
    ctx.out.table("absorption.csv", &["n", "pmf", "survival"], &abs_rows)?;
    ctx.out.json("ssd.json", &summary)
}

fn simulate_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let (_, _, r) = pipeline(ctx)?;
    let m = |e| CliError::module("simulate", e);
    let pi0 = ctx.cfg.start(ctx.states())?;
    let pi_tilde_0 = ssd::admissible_initials(&r.lambda, &pi0).map_err(m)?.pi_tilde_0;
    let partial = ssd::verify_sharpness(&r.reversed, &r.p_tilde, &r.lambda, &pi0, &pi_tilde_0, 0).map_err(m)?.partial;
    let pb = coupling::coupling_kernel(&r.reversed, &r.p_tilde, &r.lambda).map_err(m)?;
    let init = coupling::product_initial(&r.lambda, &pi_tilde_0);
    let seed = ctx.flags.seed.or(ctx.cfg.options.seed).unwrap_or(0);
    let trials = ctx.flags.trials.or(ctx.cfg.options.trials).unwrap_or(100_000);
    let length = ctx.cfg.options.length.unwrap_or(20);
    let batch = coupling::simulate(&pb, &init, partial, length, trials, seed).map_err(m)?;
    let rep = coupling::empirical_report(&batch, &r.lambda);
    let exact_mean = ssd::absorption_exact(&r.p_tilde, &pi_tilde_0, partial, length).ok().map(|a| a.mean);
    let cell_rows: Vec<Vec<String>> = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.x_tilde.to_string(),
                c.x.to_string(),
                c.hits.to_string(),
                num(c.frequency),
                num(c.expected),
                num(c.standard_error),
                c.within.to_string(),
            ]
        })
        .collect();
    let surv_rows: Vec<Vec<String>> = rep.survival.iter().map(|(k, s)| vec![k.to_string(), num(*s)]).collect();
    let summary = json!({
        "seed": seed,
        "trials": trials,
        "length": length,
        "absorbing_state": partial,
        "kernel_hash": batch.kernel_hash,
        "mean_absorption": rep.mean_absorption,
        "absorption_se": rep.absorption_se,
        "exact_mean": exact_mean,
        "cells_within": rep.cells_within(),
        "excluded": rep.excluded,
    });
    ctx.out.table("cells.csv", &["x_tilde", "x", "hits", "frequency", "expected", "standard_error", "within"], &cell_rows)?;
    ctx.out.table("survival.csv", &["n", "survival"], &surv_rows)?;
    ctx.out.json("simulate.json", &summary)
}

fn cutoff_cmd(ctx: &mut Ctx) -> CliResult<()> {
    let (a1, a2) = match (ctx.chain.kind, ctx.chain.mutation) {
        (ChainKind::MoranMutation | ChainKind::BernoulliLaplace, Some(a)) => a,
        _ => return Err(CliError::Unsupported("cutoff needs a moran_mutation or bernoulli_laplace chain".into())),
    };
    let sweep = ctx.cfg.options.sweep.clone().unwrap_or_else(|| vec![ctx.chain.kernel.top()]);
    let table = ssd::cutoff_report(&sweep, |n| spectral::bd_spectrum(&spectral::moran_mutation_params(n, a1, a2)?))
        .map_err(|e| CliError::module("cutoff", e))?;
    let a = a1 + a2;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let (approx, ratio) = ssd::moran_asymptote(r.n, a, r.mean);
            vec![
                r.n.to_string(),
                num(r.mean),
                num(r.variance),
                num(r.var_over_mean_sq),
                num(r.gap),
                num(r.gap_times_mean),
                num(r.n as f64 * ssd::harmonic(r.n)),
                num(approx),
                num(ratio),
            ]
        })
        .collect();
    let summary = json!({
        "a1": a1,
        "a2": a2,
        "cutoff": table.cutoff,
        "var_bound_holds": table.rows.iter().all(|r| r.var_bound_holds),
    });
    ctx.out.table(
        "cutoff.csv",
        &["N", "mean", "variance", "var_over_mean_sq", "gap", "gap_times_mean", "n_harmonic", "asymptote", "asymptote_ratio"],
        &rows,
    )?;
    ctx.out.json("cutoff.json", &summary)
}

fn plotdata(ctx: &mut Ctx) -> CliResult<()> {
    let series = ctx.flags.series.clone().or(ctx.cfg.options.series.clone()).unwrap_or_else(|| "sep_vs_survival".into());
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |n: usize, name: &str, v: f64| rows.push(vec![n.to_string(), name.to_string(), num(v)]);
    match series.as_str() {
        "sep_vs_survival" => {
            let (_, _, r) = pipeline(ctx)?;
            let run = ssd_run(ctx, &r, ctx.n_max(20))?;
            for (n, sep, surv) in &run.sharpness.rows {
                push(*n, "separation", *sep);
                push(*n, "survival", *surv);
            }
        }
        "absorption_pmf" => {
            let (_, _, r) = pipeline(ctx)?;
            let run = ssd_run(ctx, &r, ctx.n_max(20))?;
            for (n, v) in run.absorption.pmf.iter().enumerate() {
                push(n, "pmf", *v);
            }
        }
        "spectrum" => {
            let spec = spectral::bd_spectrum(bd_params(ctx)?).map_err(|e| CliError::module("spectrum", e))?;
            for (k, t) in spec.eigenvalues.iter().enumerate() {
                push(k, "eigenvalue", *t);
            }
        }
        "phi_profile" => {
            let (_, _, r) = pipeline(ctx)?;
            for (x, v) in r.phi.iter().enumerate() {
                push(x, "phi", *v);
            }
        }
        other => return Err(CliError::UnknownSeries(other.to_string())),
    }
    ctx.out.table(&format!("plot_{series}.csv"), &["n", "series", "value"], &rows)
}

pub fn start_is_point_zero(pi0: &DVector<f64>) -> bool {
    pi0[0] == 1.0
}

pub fn limits() -> PathLimits {
    PathLimits::default()
}
