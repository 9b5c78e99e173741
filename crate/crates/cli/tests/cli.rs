use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dualchain"));
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_cfg(command: &str, name: &str, out: &Path) -> Output {
    run(&[command], &configs().join(name), out, &[])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV as string fields.
fn csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn dual_chain_a() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_cfg("dual", "chain_a.toml", dir.path());
    assert_eq!(o.status.code(), Some(0));
    let j = json(&dir.path().join("dual.json"));
    assert_eq!(j["feasible"], true);
    assert!((j["leak0"].as_f64().unwrap() - 0.3).abs() < 1e-15);
    let p_hat = csv(&dir.path().join("p_hat.csv"));
    assert!((f(&p_hat[0][0]) - 0.5).abs() < 1e-15);
    assert!((f(&p_hat[0][1]) - 0.2).abs() < 1e-15);
    assert_eq!(f(&p_hat[1][1]), 1.0);
}

#[test]
fn verify_chains_all_pass() {
    for name in ["chain_a.toml", "chain_b.toml", "ultrametric_chain_a.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run_cfg("verify", name, dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let j = json(&dir.path().join("verify.json"));
        assert_eq!(j["pass"], true);
        let checks = j["checks"].as_object().unwrap();
        for key in ["Eq8", "Thm1.i", "Thm1.ii", "Thm1.iii", "Thm1.K", "Eq34", "Eq38", "Eq35"] {
            assert_eq!(checks[key]["status"], "pass", "{name} {key}");
        }
        for (k, v) in checks {
            if let Some(x) = v.get("value").and_then(Value::as_f64) {
                if k.starts_with("Thm1.") && k != "Thm1.vi" {
                    assert!(x <= 1e-10, "{name} {k} = {x}");
                }
            }
        }
        assert!(dir.path().join("sharpness.csv").exists());
    }
}

#[test]
fn chain_b_three_way_keys() {
    let dir = tempfile::tempdir().unwrap();
    run_cfg("verify", "chain_b.toml", dir.path());
    let checks = json(&dir.path().join("verify.json"))["checks"].clone();
    for key in ["Eq41", "Eq41.pmf", "Eq42"] {
        assert_eq!(checks[key]["status"], "pass", "{key}");
    }
}

#[test]
fn non_monotone_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_cfg("verify", "non_monotone.toml", dir.path());
    assert_eq!(o.status.code(), Some(2));
    let j = json(&dir.path().join("verify.json"));
    assert_eq!(j["pass"], false);
    assert_eq!(j["checks"]["Eq8"]["status"], "infeasible");
    assert_eq!(j["checks"]["Thm1.iii"]["status"], "skipped");
    let o = run_cfg("dual", "non_monotone.toml", dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&dir.path().join("dual.json"))["feasible"], false);
}

#[test]
fn moran_hypergeometric_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_cfg("verify", "moran_hypergeometric.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let checks = json(&dir.path().join("verify.json"))["checks"].clone();
    for key in ["Eq42prime", "Prop9prime", "Prop9", "Eq38"] {
        assert_eq!(checks[key]["status"], "pass", "{key}");
    }
    assert!(checks["Prop9"]["detail"].as_str().unwrap().contains("witness d = 10, absorbing state 0"));
}

#[test]
fn cutoff_matches_harmonic_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_cfg("cutoff", "moran_cutoff.toml", dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = csv(&dir.path().join("cutoff.csv"));
    let ns: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ns, ["100", "200", "400"]);
    for r in &rows {
        let (mean, nh) = (f(&r[1]), f(&r[6]));
        assert!((mean - nh).abs() / nh < 1e-9);
    }
    assert_eq!(json(&dir.path().join("cutoff.json"))["cutoff"], true);
}

fn series(out: &Path, cfg: &str, name: &str) -> Vec<(usize, String, f64)> {
    let o = run(&["plotdata", "--series", name], &configs().join(cfg), out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    csv(&out.join(format!("plot_{name}.csv"))).into_iter().map(|r| (r[0].parse().unwrap(), r[1].clone(), f(&r[2]))).collect()
}

#[test]
fn plotdata_series() {
    let dir = tempfile::tempdir().unwrap();
    let rows = series(dir.path(), "chain_a.toml", "sep_vs_survival");
    assert_eq!(rows.len(), 2 * 21);
    for (n, _, v) in &rows {
        assert!((v - 0.5f64.powi(*n as i32)).abs() < 1e-12);
    }
    let spec: Vec<f64> = series(dir.path(), "reflected_walk.toml", "spectrum").iter().map(|r| r.2).collect();
    for (a, b) in spec.iter().zip([1.0, 0.5, -0.5]) {
        assert!((a - b).abs() < 1e-12, "{spec:?}");
    }
    let phi: Vec<f64> = series(dir.path(), "chain_b.toml", "phi_profile").iter().map(|r| r.2).collect();
    for (a, b) in phi.iter().zip([1.0 / 6.0, 0.5, 1.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    let pmf = series(dir.path(), "chain_a.toml", "absorption_pmf");
    assert!((pmf[1].2 - 0.5).abs() < 1e-15);
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plotdata", "--series", "bogus"], &configs().join("chain_a.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown series"));
    let o = run_cfg("frobnicate", "chain_a.toml", dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown command"));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[chain]\nkind = \"dense\"\nrows = [[0.5, 0.7], [0.2, 0.8]]\n").unwrap();
    let o = run(&["build"], &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(&bad, "[chain]\nkind = \"dense\"\nrowz = 3\n").unwrap();
    let o = run(&["build"], &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
}

#[test]
fn build_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = run_cfg("build", "moran_hypergeometric.toml", &first);
    assert_eq!(o.status.code(), Some(0));
    let cfg = first.join("again.toml");
    std::fs::write(&cfg, "[chain]\nkind = \"dense\"\nmatrix_file = \"kernel.csv\"\n").unwrap();
    let second = dir.path().join("second");
    assert_eq!(run(&["build"], &cfg, &second, &[]).status.code(), Some(0));
    let a = csv(&first.join("kernel.csv"));
    let b = csv(&second.join("kernel.csv"));
    assert_eq!(a.len(), 11);
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert_eq!(f(x).to_bits(), f(y).to_bits());
        }
    }
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("chain_b.toml");
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let o = run(&["simulate", "--seed", "11", "--trials", "20000"], &cfg, &out, &[("DUALCHAIN_THREADS", threads)]);
        assert_eq!(o.status.code(), Some(0));
        outs.push(out);
    }
    for file in ["simulate.json", "cells.csv", "survival.csv"] {
        assert_eq!(std::fs::read(outs[0].join(file)).unwrap(), std::fs::read(outs[1].join(file)).unwrap());
    }
    let j = json(&outs[0].join("simulate.json"));
    assert_eq!(j["cells_within"], true);
    assert_eq!(j["seed"], 11);
}
