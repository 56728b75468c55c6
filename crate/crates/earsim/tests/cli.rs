use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn earsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earsim")).args(args).output().unwrap()
}

fn suite() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("suite")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn validate_accepts_suite_scenes_and_rejects_junk() {
    let ok = earsim(&["validate", suite().join("scenes/name_call.json").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stderr));
    assert!(text(&ok.stdout).starts_with("ok: 2 sources"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"duration_s\": -1}").unwrap();
    let out = earsim(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).starts_with("error:"));

    let missing = earsim(&["validate", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_writes_log_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = earsim(&[
        "run",
        suite().join("silent.json").to_str().unwrap(),
        "--log",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("ok    silent"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("silent.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["passed"], serde_json::json!(true));
    assert!(dir.path().join("silent.jsonl").exists());
}

#[test]
fn unmet_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("strict.json");
    let scene = suite().join("scenes/silent.json");
    std::fs::write(
        &scenario,
        serde_json::json!({
            "name": "strict",
            "scene": scene,
            "expectations": [{"kind": "SOUND", "min": 1}],
        })
        .to_string(),
    )
    .unwrap();
    let out = earsim(&["run", scenario.to_str().unwrap(), "--log", dir.path().join("logs").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("FAIL  strict"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, "{\"attention\": {\"short_term_half_life_s\": -1}}").unwrap();
    let out = earsim(&[
        "run",
        suite().join("silent.json").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--log",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scorecard_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = earsim(&["scorecard", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("| 1a | not_applicable | no scenario covers this item"));
}
