use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tclmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclmix"))
        .args(args)
        .env_remove("TCL_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> (String, String) {
    let out = tclmix(args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(out.status.success(), "{args:?} failed: {stderr}");
    (String::from_utf8(out.stdout).unwrap(), stderr)
}

fn code(args: &[&str]) -> i32 {
    tclmix(args).status.code().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn small_sim(out: &Path, extra: &[&str]) -> (String, String) {
    let mut args = vec!["simulate", "--n", "500", "--t-end", "20", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn spectrum_starts_with_stationary_mode() {
    let (csv, _) = ok(&["spectrum"]);
    assert!(csv.starts_with("k,sign,re,im,residual,beta,regime\n"));
    assert!(rows(&csv)[0][..4] == ["0", "+", "0", "0"]);
}

#[test]
fn spectrum_residuals_are_small() {
    let r = 10.0;
    let (csv, _) = ok(&["spectrum", "--kmax", "20", "--r", "10"]);
    let rows = rows(&csv);
    assert_eq!(rows.len(), 2 + 4 * 20);
    for row in &rows {
        assert!(num(&row[4]) <= 1e-10 * r, "residual {row:?}");
    }
}

#[test]
fn beta_sweep_changes_regime_once() {
    let (csv, _) = ok(&["spectrum", "--beta-sweep", "--beta-min", "0.2", "--beta-max", "0.4", "--steps", "401"]);
    let mut betas: Vec<(f64, String)> = rows(&csv).into_iter().map(|r| (num(&r[0]), r[6].clone())).collect();
    betas.dedup();
    let flips: Vec<f64> = betas.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| w[1].0).collect();
    assert!(!flips.is_empty() && flips.len() <= 2, "{flips:?}");
    for b in flips {
        assert!((b - 0.27846).abs() < 2e-3, "flip at {b}");
    }
}

#[test]
fn bifurcation_locates_fastest_mixing() {
    let (csv, err) = ok(&["bifurcation"]);
    assert_eq!(rows(&csv).len(), 10_000);
    let c: f64 = err
        .lines()
        .find_map(|l| l.strip_prefix("C estimate = "))
        .map(num)
        .expect("C estimate printed");
    assert!((c - 1.11386).abs() < 1e-3, "C = {c}");
}

#[test]
fn envelope_without_disorder_is_flat() {
    let (csv, _) = ok(&["envelope", "--kind", "gaussian", "--delta", "0", "--points", "21"]);
    let rows = rows(&csv);
    assert_eq!(rows.len(), 21);
    for row in rows {
        assert!((num(&row[2]) - 1.0).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn envelope_hierarchy_and_oracle() {
    let (csv, err) = ok(&["envelope", "--points", "13", "--t-end", "24", "--oracle"]);
    assert!(err.contains("decay hierarchy (fastest first): gaussian > lorentzian > laplacian > uniform"));
    for row in rows(&csv) {
        if row[4] == "true" {
            let (closed, oracle) = (num(&row[2]), num(&row[5]));
            assert!((closed - oracle).abs() < 0.05, "{row:?}");
        }
    }
}

#[test]
fn simulate_is_reproducible_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let (out_a, _) = small_sim(&a, &["--seed", "9"]);
    let (out_b, _) = small_sim(&b, &["--seed", "9"]);
    let series = |p: &Path| fs::read(p.join("series_simulate.csv")).unwrap();
    assert_eq!(series(&a), series(&b));
    let digest = |s: &str| s.lines().find(|l| l.starts_with("config digest")).unwrap().to_string();
    assert_eq!(digest(&out_a), digest(&out_b));

    let cfg = a.join("config.json");
    let saved: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(saved["schema_version"], 1);
    assert_eq!(saved["seeds"][0], 9);
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(series(&a), series(&c));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(&cfg, r#"{"schema_version": 1, "n_devices": 300, "t_end": 10, "kind": "uniform", "seed": 4}"#).unwrap();
    let out = dir.path().join("run");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
    let saved: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let sim = &saved["experiments"][0]["sim"];
    assert_eq!(sim["n_devices"], 300);
    assert_eq!(sim["seed"], 7);
    assert_eq!(sim["disorder"]["kind"], "uniform");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_sim(&a, &["--threads", "1"]);
    let out = Command::new(env!("CARGO_BIN_EXE_tclmix"))
        .args(["simulate", "--n", "500", "--t-end", "20", "--out", b.to_str().unwrap()])
        .env("TCL_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let series = |p: &Path| fs::read(p.join("series_simulate.csv")).unwrap();
    assert_eq!(series(&a), series(&b));
}

#[test]
fn bad_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(code(&["simulate", "--n", "abc", "--out", out]), 2);
    assert_eq!(code(&["simulate", "--r=-1", "--out", out]), 2);
    assert_eq!(code(&["simulate", "--dt", "0", "--out", out]), 2);
    assert_eq!(code(&["spectrum", "--tau", "-3"]), 2);
    assert_eq!(code(&["envelope", "--kind", "cauchy"]), 2);
    assert_eq!(code(&["--threads", "0", "spectrum"]), 2);
    assert_eq!(code(&["nonsense"]), 2);

    for (name, body) in [
        ("unknown.json", r#"{"schema_version": 1, "colour": "red"}"#),
        ("version.json", r#"{"schema_version": 2}"#),
        ("broken.json", "{"),
    ] {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        assert_eq!(code(&["simulate", "--config", p.to_str().unwrap(), "--out", out]), 2, "{name}");
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&["simulate", "--config", missing.to_str().unwrap(), "--out", out]), 2);
}

#[test]
fn compare_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let (stdout, _) = ok(&["compare", "--n", "2000", "--t-end", "30", "--out", out.to_str().unwrap()]);
    assert!(stdout.starts_with("compare: envelope error"));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let rep = &report["reports"][0];
    assert_eq!(rep["seed"], 1);
    assert!(rep["max_rel_envelope_error"].as_f64().unwrap() < 0.5);
    let csv = fs::read_to_string(out.join("series_compare.csv")).unwrap();
    assert!(csv.starts_with("time,n_up_fraction,theory_abs,envelope_abs\n"));
}

#[test]
fn presets_write_every_series() {
    let dir = tempfile::tempdir().unwrap();
    let f3 = dir.path().join("f3");
    ok(&["fig3", "--n", "1000", "--out", f3.to_str().unwrap()]);
    for name in ["delta0", "gaussian", "lorentzian", "laplacian", "uniform"] {
        assert!(f3.join(format!("series_{name}.csv")).exists(), "{name}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(f3.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 5);

    let f1 = dir.path().join("f1");
    let (stdout, _) = ok(&["fig1", "--n", "1000", "--out", f1.to_str().unwrap()]);
    assert!(stdout.contains("decay hierarchy"));
    let report: Value = serde_json::from_str(&fs::read_to_string(f1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["hierarchy"].as_array().unwrap().len(), 4);
}
