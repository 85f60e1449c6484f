//! End-to-end binary checks: exit codes, report artifacts, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regularframe"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const PASSING_SHELL: &str = r#"{
    "kind": "shell",
    "measure": [
        { "region": { "shape": "ball", "radius": 1.0 }, "mass": 0.0, "tol": 1e-6 }
    ]
}"#;

const FAILING_SHELL: &str = r#"{
    "kind": "shell",
    "measure": [
        { "region": { "shape": "ball", "radius": 1.0 }, "mass": 0.0, "expect": 999.0, "tol": 1e-6 }
    ]
}"#;

const FLAT_INTERPOLATE: &str = r#"{
    "kind": "interpolate",
    "metric": { "family": "minkowski" },
    "window": [0.0, 1.0],
    "tail_tol": 1e-12,
    "c1_tol": 1e-4
}"#;

const FOCK_SCALAR: &str = r#"{
    "kind": "fock",
    "system": [{ "name": "phi", "conj": "phi", "mass": 1.0, "stats": "boson" }],
    "modes": 3,
    "cutoff": 2,
    "seed": 11
}"#;

#[test]
fn passing_scenario_exits_zero_and_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "ball.json", PASSING_SHELL);
    let out = bin().arg("shell").arg(&sc).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("pass measure_0"));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass"], serde_json::json!(true));
    assert_eq!(report["kind"], serde_json::json!("shell"));
}

#[test]
fn failing_check_exits_one_but_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "bad_ball.json", FAILING_SHELL);
    let out = bin().arg("shell").arg(&sc).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("FAIL measure_0"));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass"], serde_json::json!(false));
}

#[test]
fn malformed_family_is_a_schema_error_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(
        dir.path(),
        "florp.json",
        r#"{
            "kind": "interpolate",
            "metric": { "family": "florp" },
            "window": [0.0, 1.0],
            "tail_tol": 1e-12,
            "c1_tol": 1e-4
        }"#,
    );
    let out = bin().arg("interpolate").arg(&sc).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("florp"), "{err}");
    assert!(err.contains("line"), "no location in: {err}");
}

#[test]
fn kind_and_subcommand_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "ball.json", PASSING_SHELL);
    let out = bin().arg("evolve").arg(&sc).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("does not match"));
}

#[test]
fn missing_scenario_file_is_reported_as_an_error() {
    let out = bin().arg("shell").arg("/nonexistent/nowhere.json").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_tables_land_next_to_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "flat.json", FLAT_INTERPOLATE);
    let report_path = dir.path().join("report.json");
    let out = bin().arg("interpolate").arg(&sc).arg("--out").arg(&report_path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(report_path.exists());
    let csv = std::fs::read_to_string(dir.path().join("report.profile.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,f,g00,g11,g22,g33");
    assert_eq!(csv.lines().count(), 51);
}

fn strip_timestamps(text: &str) -> String {
    text.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn same_seed_runs_are_byte_identical_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "fock.json", FOCK_SCALAR);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let run = bin().arg("fock").arg(&sc).arg("--seed").arg("5").arg("--out").arg(out)
            .output()
            .unwrap();
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    }
    let ra = std::fs::read_to_string(&a).unwrap();
    let rb = std::fs::read_to_string(&b).unwrap();
    assert_eq!(strip_timestamps(&ra), strip_timestamps(&rb));
}

#[test]
fn fock_accepts_an_ad_hoc_system_table() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(
        dir.path(),
        "system.json",
        r#"[{ "name": "phi", "conj": "phi", "mass": 1.0, "stats": "boson" }]"#,
    );
    let out = bin()
        .arg("fock")
        .arg("--system")
        .arg(&sys)
        .arg("--modes")
        .arg("3")
        .arg("--cutoff")
        .arg("2")
        .arg("--check")
        .arg("ccr")
        .arg("--check")
        .arg("gamma")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("canonical_exact_defect"));
    assert!(text.contains("gamma_functorial"));
    assert!(!text.contains("groupoid_identity"));
}

#[test]
fn fock_requires_modes_and_cutoff_with_a_system_table() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(
        dir.path(),
        "system.json",
        r#"[{ "name": "phi", "conj": "phi", "mass": 1.0, "stats": "boson" }]"#,
    );
    let out = bin().arg("fock").arg("--system").arg(&sys).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--modes"));
}

#[test]
fn suite_over_an_empty_directory_passes_with_zero_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("suite").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["scenario_count"], serde_json::json!(0));
    assert_eq!(report["check_count"], serde_json::json!(0));
    assert_eq!(report["pass"], serde_json::json!(true));
}

#[test]
fn suite_records_both_passing_and_failing_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a_pass.json", PASSING_SHELL);
    write(dir.path(), "b_fail.json", FAILING_SHELL);
    let out = bin()
        .arg("suite")
        .arg(dir.path())
        .env("REGULARFRAME_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("pass a_pass.json"), "{err}");
    assert!(err.contains("FAIL b_fail.json"), "{err}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["file"], serde_json::json!("a_pass.json"));
    assert_eq!(entries[1]["file"], serde_json::json!("b_fail.json"));
    assert_eq!(report["pass"], serde_json::json!(false));
}

#[test]
fn suite_with_an_unparseable_scenario_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "ok.json", PASSING_SHELL);
    write(dir.path(), "broken.json", "{ not json");
    let out = bin().arg("suite").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ERROR broken.json"));
}
