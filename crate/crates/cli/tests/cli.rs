use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulemine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    stdout(&out)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn mono_report_lists_sources_and_rules() {
    let text = ok(&["mine-mono", "--config", path(&fixture("long_covid.toml"))]);
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["mode"], "mono");
    assert_eq!(report["width"], 3);
    assert_eq!(report["sources"].as_array().unwrap().len(), 3);
    assert_eq!(report["sources"][1]["label"], "s2");
    let set = &report["rule_sets"][0];
    assert_eq!(set["interpretation"], "retention");
    assert_eq!(set["minimal"][0]["sources"], serde_json::json!([2]));
    assert_eq!(set["minimal"][0]["mask"], 2);
    assert!(text.ends_with("}\n"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for config in ["long_covid.toml", "long_covid_dual.toml", "pulmonary_rehab.toml"] {
        let cmd = if config.contains("dual") { "mine-dual" } else { "mine-mono" };
        let a = ok(&[cmd, "--config", path(&fixture(config))]);
        let b = ok(&[cmd, "--config", path(&fixture(config))]);
        assert_eq!(a, b, "{config}");
        // Thread count changes the config digest but never the rules.
        let c = ok(&[cmd, "--config", path(&fixture(config)), "--parallelism", "4"]);
        let (a, c): (Value, Value) = (serde_json::from_str(&a).unwrap(), serde_json::from_str(&c).unwrap());
        assert_eq!(a["rule_sets"], c["rule_sets"], "{config}");
    }
}

#[test]
fn output_file_round_trips_through_explain() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let summary = ok(&[
        "mine-mono",
        "--config",
        path(&fixture("long_covid.toml")),
        "--output",
        path(&report),
    ]);
    assert_eq!(
        summary.trim(),
        "If s2 is retained, then the model recommends an ineffective treatment."
    );
    assert_eq!(ok(&["explain", "--report", path(&report)]), summary);
}

#[test]
fn dual_explanation_has_one_section_per_interpretation() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("dual.json");
    let text = ok(&[
        "mine-dual",
        "--config",
        path(&fixture("long_covid_dual.toml")),
        "--output",
        path(&report),
    ]);
    assert!(text.contains("Retention rules:"), "{text}");
    assert!(text.contains("Omission rules:"), "{text}");
    assert!(text.contains("If s2 is omitted, then the model recommends an effective treatment."));
    let uncached = ok(&["mine-dual", "--config", path(&fixture("long_covid_dual.toml")), "--no-cache"]);
    let uncached: Value = serde_json::from_str(&uncached).unwrap();
    let cached: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for i in 0..2 {
        assert_eq!(cached["rule_sets"][i]["valid"], uncached["rule_sets"][i]["valid"]);
    }
}

#[test]
fn verify_reports_valid_and_invalid_rules() {
    let config = fixture("pulmonary_rehab.toml");
    let valid = ok(&["verify", "--config", path(&config), "--sources", "2,4"]);
    assert!(valid.starts_with("valid\n"));
    let json: Value = serde_json::from_str(&valid["valid\n".len()..]).unwrap();
    assert_eq!(json["verify"]["valid"], true);

    let invalid = ok(&["verify", "--config", path(&config), "--sources", "[2]"]);
    assert!(invalid.starts_with("invalid\n"));
    let bad = run(&["verify", "--config", path(&config), "--sources", "7"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_dumps_every_node() {
    let text = ok(&["oracle", "--config", path(&fixture("pulmonary_rehab.toml"))]);
    let report: Value = serde_json::from_str(&text).unwrap();
    let dump = &report["oracle"];
    assert_eq!(dump["evaluations"], 32);
    let nodes = dump["per_node_satisfaction"].as_object().unwrap();
    assert_eq!(nodes.len(), 32);
    // Mask 0b01010 is exactly documents 2 and 4.
    assert_eq!(nodes["10"], 1);
    assert_eq!(nodes["2"], 0);
    assert_eq!(report["rule_sets"][0]["valid"].as_array().unwrap().len(), 8);
}

#[test]
fn sweep_writes_one_row_per_rule_count() {
    let csv = ok(&["sweep", "--n", "2"]);
    assert_eq!(csv.lines().count(), 1 + 5);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    ok(&["sweep", "--n", "4", "--output", path(&out)]);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 17);
}

#[test]
fn oversized_sweep_is_a_usage_error() {
    let out = run(&["sweep", "--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("the limit is n = 4"), "{}", stderr(&out));
}

#[test]
fn mode_mismatch_is_a_usage_error() {
    let out = run(&["mine-mono", "--config", path(&fixture("long_covid_dual.toml"))]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unscripted_node_aborts_with_its_sources() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "partial.toml",
        r#"
[input]
question = "q"
sources = ["a", "b"]

[model]
kind = "scripted"
[[model.outputs]]
retained = [1, 2]
output = "yes"

[predicate]
kind = "target-match"
target = "yes"
"#,
    );
    let out = run(&["mine-mono", "--config", path(&config)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("run aborted at node"), "{err}");
    assert!(err.contains("sources ["), "{err}");
}

#[test]
fn malformed_report_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"schema_version": 99}"#);
    let out = run(&["explain", "--report", path(&bad)]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_api_key_variable_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "remote.toml",
        r#"
[input]
question = "q"
sources = ["a"]

[model]
kind = "remote"
endpoint = "http://127.0.0.1:9/v1"
model = "m"
api_key = "${RULEMINE_TEST_KEY_THAT_IS_NOT_SET}"

[predicate]
kind = "token"
"#,
    );
    let out = run(&["mine-mono", "--config", path(&config)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("RULEMINE_TEST_KEY_THAT_IS_NOT_SET"), "{}", stderr(&out));
}
