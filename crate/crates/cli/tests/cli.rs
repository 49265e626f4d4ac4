//! Black-box tests of the `rhocert` binary: exit codes, JSON/CSV output
//! shapes, error naming, and byte-for-byte reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhocert"))
}

fn g1_config() -> String {
    format!("{}/../../configs/g1.json", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary launches")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

#[test]
fn certify_fixed_rho_feasible_exits_zero_with_certificate_json() {
    let out = run(&[
        "certify",
        &g1_config(),
        "--rho",
        "0.75",
        "--family",
        "sector+off_by_k:1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout_str(&out)).expect("valid JSON");
    assert_eq!(json["rho"].as_f64(), Some(0.75));
    assert!(json["margin"].as_f64().expect("margin") > 0.0);
    let lambdas = json["lambdas"].as_array().expect("lambdas");
    assert_eq!(lambdas.len(), 2);
    assert!(lambdas.iter().all(|l| l.as_f64().expect("number") >= 0.0));
    assert_eq!(json["family"].as_str(), Some("sector[0,1]+off_by_1"));
}

#[test]
fn certify_fixed_rho_infeasible_exits_two() {
    let out = run(&[
        "certify",
        &g1_config(),
        "--rho",
        "0.66",
        "--family",
        "sector",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let json: serde_json::Value = serde_json::from_str(&stdout_str(&out)).expect("valid JSON");
    assert_eq!(json["status"].as_str(), Some("infeasible"));
    assert_eq!(json["rho"].as_f64(), Some(0.66));
}

#[test]
fn malformed_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{
            "plant": {"num": [1.0], "den": [1.0, -0.5]},
            "nonlinearity": {"kind": "arctan", "b": -2.0}
        }"#,
    )
    .expect("written");
    let out = run(&["certify", path.to_str().expect("utf-8 path")]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("nonlinearity"),
        "stderr should name the offending field: {stderr}"
    );

    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ not json").expect("written");
    let out = run(&["certify", garbled.to_str().expect("utf-8 path")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_family_token_exits_one() {
    let out = run(&["certify", &g1_config(), "--family", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn minimized_certificates_are_bytewise_reproducible() {
    let first = run(&["certify", &g1_config(), "--family", "sector"]);
    let second = run(&["certify", &g1_config(), "--family", "sector"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout, "repeat runs must print identical bytes");
}

#[test]
fn sweep_output_is_schedule_independent() {
    let args_base = [
        "sweep",
        &g1_config(),
        "--b-grid",
        "0.5:1:2",
        "--families",
        "sector",
    ];
    let seq = run(&[&args_base[..], &["--jobs", "1"]].concat());
    let par = run(&[&args_base[..], &["--jobs", "3"]].concat());
    assert_eq!(seq.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&seq.stderr));
    assert_eq!(seq.stdout, par.stdout, "jobs must not change the CSV");
    let text = stdout_str(&seq);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "b,family,rho_cert,rho_linearized,margin,status");
    assert_eq!(lines.len(), 3, "header plus one row per gain");
    assert!(lines[1].starts_with("0.5,sector[0,0.5],"));
    assert!(lines[2].ends_with("certified"));
}

#[test]
fn simulate_writes_reproducible_trajectories() {
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "simulate",
            &g1_config(),
            "--x0-count",
            "2",
            "--steps",
            "40",
            "--seed",
            "7",
            "--out",
            dir.path().to_str().expect("utf-8 path"),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["traj_00.csv", "traj_01.csv", "summary.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).expect("file exists");
        let b = std::fs::read(dir_b.path().join(name)).expect("file exists");
        assert_eq!(a, b, "{name} must be identical across runs at a fixed seed");
    }
    let traj = std::fs::read_to_string(dir_a.path().join("traj_00.csv")).expect("readable");
    assert_eq!(traj.lines().count(), 42, "header plus steps+1 rows");
    assert_eq!(traj.lines().next(), Some("k,state_norm,y,u"));
}

#[test]
fn selftest_passes_and_exits_zero() {
    let out = run(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_str(&out).contains("0 failed"));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_str(&out).contains("certify"));
}

#[test]
fn stock_configs_parse_and_linearize() {
    for name in ["g1.json", "g2.json", "open_loop.json"] {
        let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
        assert!(Path::new(&path).exists(), "missing stock config {name}");
        let out = run(&["linearize", &path]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "linearize {name} stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let json: serde_json::Value = serde_json::from_str(&stdout_str(&out)).expect("valid JSON");
        assert!(json["spectral_radius"].as_f64().expect("radius") < 1.0);
    }
}
