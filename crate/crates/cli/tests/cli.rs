use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_etpa-hom"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn etpa-hom");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn closed_form_floor_is_one_minus_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let (curve, params) = (dir.path().join("cf.csv"), dir.path().join("p.json"));
    let cfg = config("reference_40nm.json");
    let out = run(&[
        "--config",
        s(&cfg),
        "closed-form",
        "--out",
        s(&curve),
        "--params-out",
        s(&params),
    ]);
    assert!(out.status.success());
    let kappa = read_json(&params)["kappa"].as_f64().unwrap();
    let zero = csv_rows(&curve).into_iter().find(|r| r[0] == "0").unwrap();
    let floor: f64 = zero[1].parse().unwrap();
    assert!((floor - (1.0 - kappa)).abs() < 1e-12);
}

#[test]
fn outputs_are_deterministic_and_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_10nm.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for p in [&a, &b] {
        assert!(
            run(&["--config", s(&cfg), "--delay-step-fs", "20", "simulate", "--out", s(p)])
                .status
                .success()
        );
    }
    assert!(run(&[
        "--config",
        s(&cfg),
        "--delay-step-fs",
        "20",
        "--eta",
        "0.1",
        "simulate",
        "--out",
        s(&c)
    ])
    .status
    .success());
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let first = |p: &Path| std::fs::read_to_string(p).unwrap().lines().next().unwrap().to_string();
    assert!(first(&a).starts_with("# etpa-hom simulate config-sha256="));
    assert_ne!(first(&a), first(&c), "flag overrides must change the hash");
    assert_eq!(csv_rows(&a).len(), 81);
}

#[test]
fn synth_then_fit_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_40nm.json");
    let counts = dir.path().join("counts.csv");
    let report = dir.path().join("fit.json");
    let out = run(&[
        "--config",
        s(&cfg),
        "--eta",
        "0.1247",
        "--seed",
        "11",
        "synth",
        "hom",
        "--out",
        s(&counts),
        "--peak-rate",
        "50000",
    ]);
    assert!(out.status.success());
    let truth = read_json(&dir.path().join("counts.csv.truth.json"));
    let eta_true = truth["eta"].as_f64().unwrap();
    assert_eq!(eta_true, 0.1247);
    assert_eq!(truth["scenario"]["noise"]["seed"], 11);

    assert!(
        run(&["--config", s(&cfg), "fit", "--input", s(&counts), "--out", s(&report)])
            .status
            .success()
    );
    let r = read_json(&report);
    let eta = r["params"]["eta"].as_f64().unwrap();
    let ci = r["ci95"]["eta"].as_f64().unwrap();
    assert!((eta - eta_true).abs() <= ci, "eta {eta} ± {ci} vs {eta_true}");
}

#[test]
fn series_over_synthetic_concentrations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_40nm.json");
    let mut manifest = String::from("label,concentration_molar,path\n");
    for (k, (eta, conc)) in [(0.0069, 0.0), (0.0294, 0.01), (0.1247, 0.1)].iter().enumerate() {
        let name = format!("c{k}.csv");
        let p = dir.path().join(&name);
        let e = eta.to_string();
        let out = run(&[
            "--config",
            s(&cfg),
            "--eta",
            &e,
            "--seed",
            "5",
            "synth",
            "hom",
            "--out",
            s(&p),
            "--peak-rate",
            "1e7",
        ]);
        assert!(out.status.success());
        manifest.push_str(&format!("c{k},{conc},{name}\n"));
    }
    let mpath = dir.path().join("series.csv");
    std::fs::write(&mpath, manifest).unwrap();
    let table = dir.path().join("table.csv");
    let out = run(&[
        "--config",
        s(&cfg),
        "series",
        "--manifest",
        s(&mpath),
        "--out",
        s(&table),
    ]);
    assert!(out.status.success());
    let rows = csv_rows(&table);
    assert_eq!(rows.len(), 3);
    let etas: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(etas.windows(2).all(|w| w[1] > w[0]), "{etas:?}");
    let vis: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(vis.windows(2).all(|w| w[1] < w[0]), "{vis:?}");
}

#[test]
fn transmittance_from_synthetic_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_40nm.json");
    let sweep = dir.path().join("sweep.csv");
    let out = run(&[
        "synth",
        "sweep",
        "--out",
        s(&sweep),
        "--slopes",
        "0.3425066",
        "0",
        "--loss",
        "0.05",
        "--points",
        "12",
    ]);
    assert!(out.status.success());
    let corrected = dir.path().join("cs.json");
    let raw = dir.path().join("raw.json");
    assert!(run(&[
        "--config",
        s(&cfg),
        "transmittance",
        "--input",
        s(&sweep),
        "--out",
        s(&corrected)
    ])
    .status
    .success());
    assert!(run(&[
        "--config",
        s(&cfg),
        "transmittance",
        "--input",
        s(&sweep),
        "--out",
        s(&raw),
        "--no-loss-correct",
    ])
    .status
    .success());
    let sigma = |p: &Path| {
        read_json(p)["channels"][0]["cross_section"]["sigma_e"]
            .as_f64()
            .unwrap()
    };
    assert!((sigma(&corrected) / 5.6874e-21 - 1.0).abs() < 0.01);
    assert!(sigma(&raw) < 0.9 * sigma(&corrected));
}

#[test]
fn transmittance_needs_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    assert!(run(&["synth", "sweep", "--out", s(&sweep), "--slopes", "0.3", "0"])
        .status
        .success());
    let out = bin()
        .args([
            "transmittance",
            "--input",
            s(&sweep),
            "--out",
            s(&dir.path().join("x.json")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_data");
    let ok = run(&[
        "transmittance",
        "--input",
        s(&sweep),
        "--out",
        s(&dir.path().join("y.json")),
        "--concentration-molar",
        "0.1",
        "--length-cm",
        "1",
        "--spot-diameter-um",
        "58",
    ]);
    assert!(ok.status.success());
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--out", s(&dir.path().join("x.csv"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "missing config");

    let cfg = config("reference_40nm.json");
    let out = bin()
        .args([
            "--config",
            s(&cfg),
            "fit",
            "--input",
            "/nonexistent/data.csv",
            "--out",
            "x.json",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let out = bin()
        .args([
            "--config",
            s(&cfg),
            "--grid-n",
            "32",
            "simulate",
            "--out",
            s(&dir.path().join("x.csv")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "grid_aliasing");

    let out = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_battery_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("v.json");
    let out = bin()
        .args([
            "--grid-n",
            "512",
            "--delay-min-fs",
            "-200",
            "--delay-max-fs",
            "200",
            "--delay-step-fs",
            "10",
            "validate",
            "--no-refinement",
            "--out",
            s(&report),
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max|numeric-closed_form|="), "{stdout}");
    let r = read_json(&report);
    assert!(r["cases"].as_array().unwrap().len() >= 20);
    assert!(r["max_reduction_deviation"].as_f64().unwrap() < 1e-9);
    let passed = r["passed"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if passed { 0 } else { 6 }));
}
