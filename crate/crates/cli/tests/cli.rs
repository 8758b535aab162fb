use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gsbq(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsbq"))
        .args(args)
        .env("GSBQ_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_at_exact_point() {
    let dir = tempfile::tempdir().unwrap();
    let beta = (-13.0f64 / 6.0).to_string();
    let o = gsbq(
        dir.path(),
        &["solve", "--beta", &beta, "--c", "0", "--p", "2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,phi"));
    assert_eq!(lines.count(), 4096);
    let diag = json(&dir.path().join("diagnostics.json"));
    assert!(diag["diagnostics"]["ik_gap_rel"].as_f64().unwrap() <= 1e-8);
    assert_eq!(diag["grid"]["n"], 4096);
}

#[test]
fn csv_values_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["solve", "--L", "60", "--n", "1024"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    for line in csv.lines().skip(1).take(50) {
        for field in line.split(',') {
            let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(
                mantissa.chars().filter(|ch| ch.is_ascii_digit()).count(),
                17,
                "{field}"
            );
        }
    }
}

#[test]
fn atlas_p12_has_no_stable_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["atlas", "--p", "12", "--resolution", "21"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("atlas.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("beta,c,d,d_c,d_beta,d_cc,classification,provenance")
    );
    let classes: Vec<_> = lines
        .map(|l| l.split(',').nth(6).unwrap().to_string())
        .collect();
    assert!(classes.len() >= 40);
    assert!(classes.iter().all(|c| c != "Stable"));
    assert_eq!(json(&dir.path().join("atlas.json"))["counts"]["Stable"], 0);
}

#[test]
fn validate_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.contains("all") && !stdout.contains("FAIL"),
        "{stdout}"
    );
    let table = fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(table.starts_with("check,value,tolerance,status"));
    assert!(table.lines().skip(1).all(|l| l.ends_with(",pass")));
}

#[test]
fn out_of_range_speed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["solve", "--c", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c out of range"));
}

#[test]
fn unknown_flag_and_key_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["solve", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 1024, "gamma": 1}"#).unwrap();
    let o = gsbq(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"n": 1024, "L": 80, "beta": -1.5, "max_iterations": 500}"#,
    )
    .unwrap();
    let o = gsbq(
        dir.path(),
        &["solve", "--config", cfg.to_str().unwrap(), "--n", "2048"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag = json(&dir.path().join("diagnostics.json"));
    assert_eq!(diag["grid"]["n"], 2048);
    assert_eq!(diag["grid"]["L"], 80.0);
    assert_eq!(diag["params"]["beta"], -1.5);
    assert_eq!(diag["options"]["max_iterations"], 500);
}

#[test]
fn output_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = gsbq(
        env_dir.path(),
        &[
            "kernel",
            "--beta",
            "0",
            "--x-samples",
            "3",
            "--output",
            flag_dir.path().to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(flag_dir.path().join("kernel.csv").exists());
    assert!(!env_dir.path().join("kernel.csv").exists());
}

#[test]
fn outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "evolve",
        "--beta",
        "0",
        "--c",
        "0.8",
        "--L",
        "64",
        "--n",
        "512",
        "--t-final",
        "0.5",
        "--dt",
        "0.005",
        "--record-every",
        "10",
        "--perturbation",
        "bandlimited_noise",
        "--delta",
        "0.01",
        "--seed",
        "11",
    ];
    assert_eq!(gsbq(a.path(), &args).status.code(), Some(0));
    assert_eq!(gsbq(b.path(), &args).status.code(), Some(0));
    for name in ["trajectory.csv", "evolve.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn worker_count_does_not_change_sweep() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = [
        "sweep",
        "--segment",
        "S2",
        "--samples",
        "8",
        "--curvature",
        "--L",
        "100",
        "--n",
        "2048",
    ];
    let mut one = base.to_vec();
    one.extend(["--workers", "1"]);
    let mut four = base.to_vec();
    four.extend(["--workers", "4"]);
    assert_eq!(gsbq(a.path(), &one).status.code(), Some(0));
    assert_eq!(gsbq(b.path(), &four).status.code(), Some(0));
    let sa = fs::read(a.path().join("sweep.csv")).unwrap();
    assert_eq!(sa, fs::read(b.path().join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(sa).unwrap().lines().count(), 9);
}

#[test]
fn classify_outside_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(dir.path(), &["classify", "--c", "1.5", "--p", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        json(&dir.path().join("classification.json"))["classification"],
        "NoSolitaryWave"
    );
}

#[test]
fn classify_inside_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(
        dir.path(),
        &[
            "classify", "--beta", "0", "--c", "0.1", "--L", "100", "--n", "2048",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&dir.path().join("classification.json"));
    assert_eq!(doc["classification"], "Unstable");
    assert!(doc["d"].as_f64().unwrap() > 0.0);
}

#[test]
fn functionals_report_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(
        dir.path(),
        &[
            "functionals",
            "--beta",
            "-1",
            "--c",
            "0.3",
            "--L",
            "100",
            "--n",
            "2048",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&dir.path().join("functionals.json"));
    for key in [
        "I", "K", "E", "Q", "Q1", "Q2", "Q3_k1", "action_L", "nehari_P", "m_ratio", "d_value",
    ] {
        assert!(doc[key].is_number(), "{key}");
    }
    let dirs = json(&dir.path().join("directions.json"));
    assert!(dirs["directions"]["dir_i_value"].is_number());
}

#[test]
fn blowup_is_a_computation_error_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsbq(
        dir.path(),
        &[
            "evolve",
            "--beta",
            "0",
            "--c",
            "0.1",
            "--L",
            "64",
            "--n",
            "1024",
            "--t-final",
            "20",
            "--dt",
            "0.002",
            "--delta",
            "0.01",
            "--perturbation",
            "scale",
            "--monitors",
            "E,Q",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("blowup"));
    let doc = json(&dir.path().join("evolve.json"));
    assert_eq!(doc["blowup_flag"], true);
    assert!(doc["blowup_time"].as_f64().unwrap() < 20.0);
}
