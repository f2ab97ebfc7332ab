use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BUMP: &str = r#"{"2,0,0": -0.5, "0,2,0": -0.3, "0,0,2": -0.15, "3,0,0": 0.4, "1,2,0": -1.2,
    "1,1,1": 0.5, "0,0,3": 0.3, "2,0,1": 0.35, "0,2,1": -0.35}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cmc-lab"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

#[test]
fn euclidean_curvature_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1}"#, &["curvature"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(dir.path(), "curvature.json");
    assert_eq!(v["symmetry"]["status"], "pass");
    let all_zero = |a: &Value| a.as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0));
    assert!(all_zero(&v["riemann"]));
    assert!(all_zero(&v["nabla_riemann"]));
    let csv = std::fs::read_to_string(dir.path().join("out/riemann.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 81);
}

#[test]
fn space_form_partial_scalar_curvature() {
    for k in [1u64, 2] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = format!(r#"{{"metric": {{"name": "space_form", "params": {{"c": 1.0}}}}, "dim": 4, "k": {k}, "point": [0.1, 0.0, -0.05, 0.02]}}"#);
        let out = run(dir.path(), &cfg, &["invariants"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let inv = &read_json(dir.path(), "invariants.json")["invariants"];
        let want = (k * (k + 1)) as f64;
        assert!((inv["scalar_k1"].as_f64().unwrap() - want).abs() < 1e-8);
        assert!(inv.get("ric_perp").is_some());
    }
}

#[test]
fn full_dimension_omits_normal_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"name": "space_form", "params": {"c": -1.0}}, "dim": 3, "k": 2}"#;
    let out = run(dir.path(), cfg, &["invariants"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let inv = &read_json(dir.path(), "invariants.json")["invariants"];
    assert!((inv["scalar_k1"].as_f64().unwrap() + 6.0).abs() < 1e-8);
    for key in ["ric_perp", "norm_ric_perp", "norm_r_perp"] {
        assert!(inv.get(key).is_none(), "{key}");
    }
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1,"#, &["curvature"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": -1}"#, &["curvature"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`k`"));
    let out = run(dir.path(), r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1, "tolerances": {"wobble": 1}}"#, &["curvature"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn point_outside_chart_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"name": "space_form", "params": {"c": 1.0}}, "dim": 3, "k": 1, "point": [5.0, 0.0, 0.0]}"#;
    let out = run(dir.path(), cfg, &["invariants"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn critical_point_of_the_bump_is_nondegenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"metric": {{"name": "conformal", "params": {{"f": {BUMP}}}}}, "dim": 3, "k": 1,
            "point": [0.05, -0.04, 0.03], "seed_params": [0.0, 0.0, 0.0, 0.04, -0.03]}}"#
    );
    let out = run(dir.path(), &cfg, &["find-critical"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["nondegenerate"], true);
    assert!(summary["gradient_norm"].as_f64().unwrap() < 1e-8);
    assert!(dir.path().join("out/critical_point.json").exists());
}

#[test]
fn moments_and_spectra_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"name": "euclidean"}, "dim": 4, "k": 2, "l_max": 4}"#;
    let out = run(dir.path(), cfg, &["verify", "--which", "moments"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(dir.path(), "verify_moments.json")["status"], "pass");
    let out = run(dir.path(), cfg, &["verify", "--which", "spectra"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let spectra = read_json(dir.path(), "spectra.json");
    let combined = spectra["tables"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["operator"] == "combined")
        .expect("combined table")
        .clone();
    for row in combined["rows"].as_array().unwrap() {
        let l = row["degree"].as_i64().unwrap();
        let num = row["eigenvalue"]["num"].as_str().unwrap().parse::<i64>().unwrap();
        let den = row["eigenvalue"]["den"].as_str().unwrap().parse::<i64>().unwrap();
        assert_eq!(num, -l * (l - 1) * den);
    }
    // Kernel: degrees 0 and 1 in each of the codim = 1 normal directions.
    assert_eq!(spectra["combined_kernel_dimension"], 4);
}

#[test]
fn space_form_energy_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"name": "space_form", "params": {"c": 1.0}}, "dim": 3, "k": 1,
        "eps_sweep": {"eps_list": [0.16, 0.08, 0.04, 0.02, 0.01], "skip_largest": 1}}"#;
    let out = run(dir.path(), cfg, &["verify", "--which", "energy"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(dir.path(), "verify_energy.json");
    assert!(v["details"]["slope"].as_f64().unwrap() >= 4.75);
    let csv = std::fs::read_to_string(dir.path().join("out/energy_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn unmet_tolerance_exits_with_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"name": "space_form", "params": {"c": 1.0}}, "dim": 3, "k": 1,
        "radii": [0.16, 0.08, 0.04, 0.02], "tolerances": {"normal_coords_slope": 50.0}}"#;
    let out = run(dir.path(), cfg, &["verify", "--which", "normal-coords"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(dir.path(), "verify_normal_coords.json")["status"], "fail");
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = r#"{"metric": {"name": "space_form", "params": {"c": -1.0}}, "dim": 4, "k": 1,
        "frame_seed": "random", "rng_seed": 11, "point": [0.1, 0.2, 0.0, -0.1]}"#;
    let read = |d: &Path, name: &str| std::fs::read(d.join("out").join(name)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        assert!(run(d, cfg, &["curvature"]).status.success());
        assert!(run(d, cfg, &["invariants"]).status.success());
    }
    for name in ["riemann.csv", "curvature.json", "invariants.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn only_one_thread_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"metric": {"name": "euclidean"}, "dim": 3, "k": 1}"#, &["--threads", "4", "curvature"]);
    assert_eq!(out.status.code(), Some(2));
}
