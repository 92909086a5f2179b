//! End-to-end runs of the `hermite-frames` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hermite-frames"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn write_expansion(p: &str, n: usize, degree: usize, coeffs: &[(Vec<usize>, f64, f64)]) {
    let coeffs: Vec<Value> = coeffs
        .iter()
        .map(|(xi, re, im)| json!({ "xi": xi, "re": re, "im": im }))
        .collect();
    let v = json!({ "n": n, "N": degree, "coeffs": coeffs });
    std::fs::write(p, serde_json::to_string(&v).unwrap()).unwrap();
}

fn coeff_map(v: &Value) -> std::collections::BTreeMap<Vec<u64>, (f64, f64)> {
    v["coeffs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let xi = c["xi"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
            let re = c["re"].as_f64().unwrap();
            let im = c.get("im").and_then(Value::as_f64).unwrap_or(0.0);
            (xi, (re, im))
        })
        .collect()
}

fn round_trip_error(n: usize, degree: usize, big_j: &str, coeffs: &[(Vec<usize>, f64, f64)]) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let (input, frame, back) = (path(&dir, "f.json"), path(&dir, "frame.json"), path(&dir, "back.json"));
    write_expansion(&input, n, degree, coeffs);
    let out = run(&["analyze", "--in", &input, "--J", big_j, "--out", &frame]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["synthesize", "--in", &frame, "--n", &n.to_string(), "--out", &back]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let want = coeff_map(&read_json(Path::new(&input)));
    let got = coeff_map(&read_json(Path::new(&back)));
    let mut err = 0.0f64;
    let mut norm = 0.0f64;
    for (xi, &(re, im)) in &want {
        let (gr, gi) = got.get(xi).copied().unwrap_or((0.0, 0.0));
        err += (gr - re).powi(2) + (gi - im).powi(2);
        norm += re * re + im * im;
    }
    for (xi, &(gr, gi)) in &got {
        if !want.contains_key(xi) {
            err += gr * gr + gi * gi;
        }
    }
    (err / norm).sqrt()
}

#[test]
fn grid_reports_level_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = path(&dir, "grid.json");
    let out = run(&["grid", "--n", "1", "--J", "2", "--out", &out_path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(Path::new(&out_path));
    let sizes: Vec<u64> = v["levels"].as_array().unwrap().iter().map(|l| l["N"].as_u64().unwrap()).collect();
    assert_eq!(&sizes[..3], &[5, 11, 36]);
    assert_eq!(v["config"]["command"], "grid");
}

#[test]
fn analyze_then_synthesize_recovers_one_dimensional_input() {
    let coeffs: Vec<_> = (0..=12).map(|k| (vec![k], 1.0 / (k + 1) as f64, (k as f64 * 0.3).sin())).collect();
    let err = round_trip_error(1, 12, "2", &coeffs);
    assert!(err <= 1e-8, "relative error {err}");
}

#[test]
fn analyze_then_synthesize_recovers_planar_input() {
    let coeffs = vec![
        (vec![0, 0], 1.0, 0.0),
        (vec![1, 2], -0.5, 0.25),
        (vec![3, 0], 0.125, -1.0),
        (vec![2, 1], 0.0, 0.75),
    ];
    let err = round_trip_error(2, 3, "1", &coeffs);
    assert!(err <= 1e-8, "relative error {err}");
}

#[test]
fn embed_check_with_unit_weight_passes_and_writes_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let (report, csv) = (path(&dir, "embed.json"), path(&dir, "hist.csv"));
    let out = run(&[
        "embed", "check", "--source", "a=1,p=2,q=2", "--target", "a=0.75,p=4,q=2", "--J", "3", "--trials", "40",
        "--report", &report, "--histogram-csv", &csv,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(Path::new(&report));
    assert_eq!(v["verdict"], "PASS");
    assert_eq!(v["lower_bound"]["agree"], true);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lo,hi,count"));
    let total: u64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert!(total > 0);
}

fn diagnose(args: &[&str]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let out_path = path(&dir, "d.json");
    let mut all = vec!["diagnose"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", &out_path]);
    let out = run(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    read_json(Path::new(&out_path))
}

#[test]
fn separated_scales_compose_to_zero() {
    let v = diagnose(&["orthogonality", "--j", "2", "--k", "5"]);
    assert_eq!(v["result"]["kernel_max"].as_f64(), Some(0.0));
    assert_eq!(v["pass"], true);
}

#[test]
fn geometry_diagnostic_passes() {
    let v = diagnose(&["geometry", "--J", "3"]);
    assert_eq!(v["pass"], true, "{v}");
}

#[test]
fn kernel_decay_diagnostic_reports_finite_constants() {
    let v = diagnose(&["kernel-decay", "--j", "3", "--N", "6"]);
    assert_eq!(v["pass"], true, "{v}");
}

#[test]
fn unknown_flag_exits_with_usage() {
    let out = run(&["grid", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_values_are_reported_together() {
    let out = run(&["grid", "--n", "0", "--delta-star", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--n") && err.contains("delta"), "{err}");
    assert_eq!(err.matches("invalid input").count(), 1, "{err}");
}

#[test]
fn unreachable_reconstruction_tolerance_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (input, frame) = (path(&dir, "f.json"), path(&dir, "frame.json"));
    write_expansion(&input, 1, 4, &[(vec![0], 1.0, 0.0), (vec![4], 0.3, -0.2)]);
    let out = run(&["analyze", "--in", &input, "--J", "1", "--tol-reconstruction", "1e-30", "--out", &frame]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!Path::new(&frame).exists());
}

#[test]
fn help_exits_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("analyze"));
}

#[test]
fn missing_output_directory_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("absent").join("grid.json");
    let out = run(&["grid", "--out", &target.display().to_string()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
    assert!(!dir.path().join("absent").exists());
}
