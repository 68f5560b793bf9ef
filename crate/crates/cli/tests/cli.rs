//! End-to-end runs of the `qns` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qns")).args(args).output().expect("qns runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn filter_dump_has_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        r#"{"system": {"splitting_hz": 1e6}, "sequences": ["U1", "U4"], "cycle_time_us": 1.0, "repetitions": 4,
            "filters": {"grid": {"start_hz": -2e6, "stop_hz": 2e6, "points": 5}, "p": [1, 3], "entries": [["x","x","z","z"]]}}"#,
    );
    let out = dir.path().join("out");
    let o = qns(&["filters", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("filters.csv"));
    assert_eq!(header, ["sequence_id", "filter", "omega_rad_s", "re", "im"]);
    // Two sequences, five frequencies, 2·9 generalized entries plus one Cartesian entry.
    assert_eq!(rows.len(), 2 * 5 * (2 * 9 + 1));
    assert!(rows.iter().any(|r| r[1] == "G+_{xx;zz}"));
    assert!(rows.iter().any(|r| r[1] == "G3_{0,0}"));
}

#[test]
fn simulate_writes_quantities_and_monte_carlo_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"system": {"splitting_hz": 0},
            "noise": {"type": "table", "entries": [
              {"a": "z", "b": "z", "rows": [[-2e6, 0, 0], [-1e6, 4000, 0], [0, 8000, 0], [1e6, 4000, 0], [2e6, 0, 0]]}]},
            "sequences": ["U1"], "cycle_time_us": 1.0, "repetitions": 2,
            "monte_carlo": {"trajectories": 200, "dt_us": 0.01}}"#,
    );
    let out = dir.path().join("out");
    let o = qns(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("quantities.csv"));
    assert_eq!(header, ["sequence_id", "T_c", "M", "quantity", "re", "im"]);
    assert_eq!(rows.len(), 4 + 12);
    let (header, rows) = read_csv(&out.join("monte_carlo.csv"));
    assert_eq!(header[0], "sequence_id");
    assert_eq!(rows.len(), 18);
}

#[test]
fn zero_splitting_reconstruction_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "z.json",
        r#"{"system": {"splitting_hz": 0}, "noise": {"type": "gaussian_triple", "offset_mhz": 0.5},
            "protocol": {"kind": "zero_splitting"}}"#,
    );
    let out = dir.path().join("out");
    let o = qns(&["reconstruct", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("spectra.csv"));
    assert_eq!(header, ["spectrum_id", "omega_rad_s", "s_true_re", "s_true_im", "s_hat_re", "s_hat_im"]);
    assert!(!rows.is_empty());
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["condition_number"].as_f64().unwrap() >= 1.0);
    assert!(diag["relative_residual"].as_f64().is_some());
    assert!(diag["assembly"].get("tail_bound").is_some());
    for e in diag["errors"].as_array().unwrap() {
        assert!(e["relative_rms"].as_f64().unwrap() < 0.05, "{e}");
    }
}

#[test]
fn invalid_input_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"sytem": {}}"#);
    assert_eq!(qns(&["reconstruct", "--config", &unknown, "--out", out]).status.code(), Some(3));
    assert_eq!(qns(&["reconstruct", "--config", "/nonexistent/qns.json", "--out", out]).status.code(), Some(3));
    assert_eq!(qns(&["reconstruct", "--shots", "lots", "--out", out]).status.code(), Some(3));
    assert_eq!(qns(&["reconstruct", "--lambda", "-1", "--out", out]).status.code(), Some(3));
    // ΩMT_c far below the suppression threshold.
    let slow = write_config(dir.path(), "slow.json", r#"{"system": {"splitting_hz": 1e3}}"#);
    assert_eq!(qns(&["reconstruct", "--config", &slow, "--out", out]).status.code(), Some(3));
}

#[test]
fn solver_failure_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    // A single dephasing-only template cannot separate the nine channels.
    let cfg = write_config(
        dir.path(),
        "one.json",
        r#"{"system": {"splitting_hz": 0}, "noise": {"type": "gaussian_triple", "offset_mhz": 0.5}, "sequences": ["U1"],
            "protocol": {"kind": "zero_splitting", "n_max": 2, "k_max": 2}}"#,
    );
    let o = qns(&["reconstruct", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
