//! End-to-end behavior of the `wigbell` binary: exit codes, error wording,
//! artifact layout, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wigbell"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const DEMO_CONFIG: &str = r#"{
  "name": "demo",
  "source": {"preset": "singlet_like", "gain": 1.0},
  "detectors": [{"kind": "deterministic_threshold", "threshold": 5.0, "baseline_i0": 0.0}],
  "angles": {"a": 45.0, "a_prime": 0.0, "b": 22.5, "b_prime": 67.5},
  "mu": 1.0,
  "n_trials": 4000,
  "seed": 7
}"#;

#[test]
fn simulate_writes_report_and_complete_manifest() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");

    let out = run(&["simulate", "--config", &config, "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let report_path = out_dir.join("simulate.json");
    let manifest_path = out_dir.join("manifest.json");
    assert!(report_path.is_file());
    assert!(manifest_path.is_file());

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["name"], "demo");
    assert!(report["detection"]["p_a"]["value"].is_number());
    assert!(report["oracle"]["p_joint"].is_number());
    assert!(report["counts"]["n_ab"].is_u64());
    assert!(report["chsh"]["coincidence_only"]["s"]["value"].is_number());
    assert!(report["chsh"]["full_ensemble_assign_minus"]["s"]["value"].is_number());
    // Reports must be reproducible byte for byte, so timestamps live only in
    // the manifest.
    let text = fs::read_to_string(&report_path).unwrap();
    assert!(!text.contains("started_at"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["n_trials"], 4000);
    assert!(manifest["started_at"].is_string());
    assert!(manifest["finished_at"].is_string());
    // Config echo carries resolved defaults.
    assert_eq!(manifest["config"]["sigma0_sq"], 0.5);
    assert_eq!(manifest["config"]["policy"], "coincidence_only");
    assert_eq!(manifest["config"]["source"]["gain"], 1.0);

    // Digest entries cover the report and match the bytes on disk.
    let outputs = manifest["outputs"].as_array().unwrap();
    let entry = outputs
        .iter()
        .find(|o| o["file"] == "simulate.json")
        .expect("report is listed in the manifest");
    let report_bytes = fs::read(&report_path).unwrap();
    assert_eq!(entry["bytes"].as_u64().unwrap(), report_bytes.len() as u64);
    let digest = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(&report_bytes))
    };
    assert_eq!(entry["sha256"].as_str().unwrap(), digest);
}

#[test]
fn unknown_key_is_rejected_with_nearest_hint() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.json",
        r#"{"source": {"preset": "singlet_like"}, "detector_efficiancy": 0.8}"#,
    );
    let out = run(&["simulate", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("detector_efficiancy"), "{err}");
    assert!(err.contains("did you mean \"detectors\"?"), "{err}");
}

#[test]
fn out_of_range_mu_names_field_and_range() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.json",
        r#"{"source": {"preset": "singlet_like"}, "mu": 1.3}"#,
    );
    let out = run(&["simulate", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("\"mu\""), "{err}");
    assert!(err.contains("[0, 1]"), "{err}");
}

#[test]
fn malformed_json_reports_position_and_exits_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "bad.json", "{\n  \"source\": {\"preset\": \"singlet_like\"}\n  \"mu\": 0.5\n}");
    let out = run(&["simulate", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("syntax error"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_flag_exits_two() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["simulate", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--config"), "{}", stderr_of(&out));
}

#[test]
fn unreadable_config_path_exits_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = run(&[
        "simulate",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_with_same_seed_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let out_c = tmp.path().join("c");

    for (dir, seed) in [(&out_a, "7"), (&out_b, "7"), (&out_c, "8")] {
        let out = run(&[
            "simulate",
            "--config",
            &config,
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
            "--quiet",
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }

    let a = fs::read(out_a.join("simulate.json")).unwrap();
    let b = fs::read(out_b.join("simulate.json")).unwrap();
    let c = fs::read(out_c.join("simulate.json")).unwrap();
    assert_eq!(a, b, "same config and seed must reproduce the report exactly");
    assert_ne!(a, c, "a different seed must actually change the data");
}

#[test]
fn cli_overrides_are_recorded_in_manifest() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "99",
        "--trials",
        "2500",
        "--quiet",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["n_trials"], 2500);
    // The config echo keeps the file's own values.
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["config"]["n_trials"], 4000);
}

#[test]
fn sweep_emits_csv_with_stable_header() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "grid.json",
        r#"{
          "source": {"preset": "singlet_like", "gain": 1.0},
          "detectors": [{"kind": "deterministic_threshold", "threshold": 3.0, "baseline_i0": 0.0}],
          "angles": {"a": 45.0, "a_prime": 0.0, "b": 22.5, "b_prime": 67.5},
          "mu_grid": [0.25, 0.5, 1.0],
          "n_trials": 3000,
          "seed": 5
        }"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run(&["sweep", "--config", &config, "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mu,E_ab,E_ab',E_a'b,E_a'b',S,S_stderr,policy"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row.split(',').count(), 8, "{row}");
        assert!(row.ends_with("coincidence_only"), "{row}");
    }
}

#[test]
fn sweep_without_grid_exits_two() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out = run(&["sweep", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("mu_grid"), "{}", stderr_of(&out));
}

#[test]
fn lhv_bound_reports_critical_efficiency_for_quantum_value() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "lhv-bound",
        "--eta",
        "1.0",
        "--target-s",
        "2.828427",
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("lhv_bound.json")).unwrap()).unwrap();
    assert_eq!(report["bound"]["max_s"], 2.0);
    let eta_crit = report["critical"]["eta_crit"].as_f64().unwrap();
    assert!((eta_crit - 0.828427).abs() < 1e-5, "eta_crit = {eta_crit}");
    assert_eq!(report["critical"]["status"], "critical");
}

#[test]
fn trial_log_records_nine_bytes_per_trial() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");
    let log_path = out_dir.join("trials.bin");
    let out = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--trial-log",
        log_path.to_str().unwrap(),
        "--trials",
        "2000",
        "--quiet",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let log = fs::read(&log_path).unwrap();
    assert_eq!(log.len(), 9 * 2000);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(
        outputs.iter().any(|o| o["file"].as_str().unwrap().ends_with("trials.bin")),
        "trial log missing from manifest"
    );
}

#[test]
fn failed_write_removes_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");
    // A directory at the trial-log path makes the final rename fail after
    // the report has already been written.
    let log_path = out_dir.join("trials.bin");
    fs::create_dir_all(&log_path).unwrap();
    let out = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--trial-log",
        log_path.to_str().unwrap(),
        "--trials",
        "2000",
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    assert!(!out_dir.join("simulate.json").exists(), "partial report left behind");
    assert!(!out_dir.join("manifest.json").exists(), "manifest written for a failed run");
}

#[test]
fn too_few_trials_exit_four_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
        "--trials",
        "1",
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("insufficient data"), "{}", stderr_of(&out));
    assert!(!out_dir.join("simulate.json").exists());
    assert!(!out_dir.join("manifest.json").exists());
}

#[test]
fn out_dir_env_var_is_the_default_destination() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("from_env");
    let out = bin()
        .args(["simulate", "--config", &config, "--trials", "2000", "--quiet"])
        .env("WIGBELL_OUT_DIR", &out_dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert!(out_dir.join("simulate.json").is_file());
}

#[test]
fn manifest_config_echo_parses_back_identically() {
    let tmp = TempDir::new().unwrap();
    let config_path = write_config(tmp.path(), "demo.json", DEMO_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        &config_path,
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    let echoed = serde_json::to_string(&manifest["config"]).unwrap();
    let reparsed = wigbell::config::parse_config(&echoed).unwrap();
    let original = wigbell::config::parse_config(DEMO_CONFIG).unwrap();
    assert_eq!(reparsed, original);
    // And emit -> parse is the identity on the resolved form.
    let emitted = wigbell::config::emit_config(&reparsed);
    assert_eq!(wigbell::config::parse_config(&emitted).unwrap(), reparsed);
}
