mod common;

use std::collections::BTreeSet;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn autoviz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoviz"))
        .args(args)
        .env_remove("AUTOVIZ_PROVIDER")
        .env_remove("AUTOVIZ_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn summarize_matches_golden_profile() {
    let data = common::dataset_path("cars");
    let out = autoviz(&["summarize", "--data", path_str(&data), "--condition", "no_enrich"]);
    let view = stdout_json(&out);
    assert_eq!(view["condition"], "no_enrich");
    let golden: Value = serde_json::from_str(
        &std::fs::read_to_string(common::repo_root().join("fixtures/datasets/golden/cars.json")).unwrap(),
    )
    .unwrap();
    let fields = view["summary"]["fields"].as_array().unwrap();
    let expected = golden["fields"].as_array().unwrap();
    assert_eq!(fields.len(), expected.len());
    assert_eq!(view["summary"]["row_count"], golden["row_count"]);
    for (f, g) in fields.iter().zip(expected) {
        assert_eq!(f["name"], g["name"]);
        assert_eq!(f["atomic_type"], g["atomic_type"]);
        assert_eq!(f["stats"]["n_unique"], g["n_unique"], "{}", g["name"]);
        assert_eq!(f["stats"]["n_null"], g["n_null"], "{}", g["name"]);
        assert_eq!(f["stats"]["min"], g["min"], "{}", g["name"]);
        assert_eq!(f["stats"]["max"], g["max"], "{}", g["name"]);
    }
}

#[test]
fn viz_with_replay_prints_the_artifact_path() {
    let runs = tempfile::tempdir().unwrap();
    let data = common::dataset_path("cars");
    let cassette = common::cassette_path("cars_e2e.json");
    let out = autoviz(&[
        "viz",
        "--data",
        path_str(&data),
        "--goal-index",
        "0",
        "--grammar",
        "vegalite",
        "--provider",
        "replay",
        "--cassette",
        path_str(&cassette),
        "--run-dir",
        path_str(runs.path()),
    ]);
    let view = stdout_json(&out);
    assert_eq!(view["status"], "compiled_ok");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().find_map(|l| l.strip_prefix("artifact: ")).expect("artifact line");
    let artifact = std::path::Path::new(line);
    assert!(artifact.is_file());
    assert!(artifact.starts_with(runs.path()));
    assert_eq!(view["artifact"]["path"], line);
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = autoviz(&["viz", "--goal-index", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = autoviz(&["summarize"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn error_classes_map_to_exit_codes() {
    let runs = tempfile::tempdir().unwrap();
    let data = common::dataset_path("cars");
    let empty = runs.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let base = ["--data", path_str(&data), "--run-dir", path_str(runs.path())];

    let mut args = vec!["viz", "--goal-index", "0", "--cassette", path_str(&empty)];
    args.extend(base);
    let out = autoviz(&args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cassette_miss"));

    let missing = runs.path().join("nope.csv");
    let out = autoviz(&["summarize", "--data", path_str(&missing), "--condition", "no_enrich"]);
    assert_eq!(out.status.code(), Some(3));

    let mut args = vec!["viz", "--goal-index", "0", "--provider", "fixture", "--grammar", "svg"];
    args.extend(base);
    assert_eq!(autoviz(&args).status.code(), Some(3));
}

#[tokio::test(flavor = "multi_thread")]
async fn cli_output_matches_the_api_schema() {
    let runs = tempfile::tempdir().unwrap();
    let data = common::dataset_path("cars");
    let cassettes: Vec<String> = common::replay_cassettes().iter().map(|p| p.display().to_string()).collect();
    let mut args = vec!["viz", "--data", path_str(&data), "--goal-index", "0", "--run-dir", path_str(runs.path())];
    for c in &cassettes {
        args.extend(["--cassette", c.as_str()]);
    }
    let cli_vis = stdout_json(&autoviz(&args));
    args[0] = "goals";
    args.truncate(3);
    for c in &cassettes {
        args.extend(["--cassette", c.as_str()]);
    }
    let cli_goals = stdout_json(&autoviz(&args));
    args[0] = "summarize";
    let cli_summary = stdout_json(&autoviz(&args));

    let app = common::TestApp::replay();
    let (_, upload) = app.upload("cars", &[]).await;
    let id = upload["session_id"].as_str().unwrap();
    let (_, api_vis) = app.post(&format!("/sessions/{id}/visualize"), json!({ "goal_index": 0 })).await;

    let mut api_keys = keys(&api_vis);
    api_keys.remove("artifact_url");
    assert_eq!(keys(&cli_vis), api_keys);
    assert_eq!(cli_vis["stub"], api_vis["stub"]);
    assert_eq!(cli_vis["goal"], api_vis["goal"]);
    assert_eq!(keys(&cli_goals), keys(&upload["goals"]));
    assert_eq!(cli_goals["goals"], upload["goals"]["goals"]);
    assert_eq!(keys(&cli_summary), keys(&upload["summary"]));
    assert_eq!(cli_summary["rendered"], upload["summary"]["rendered"]);
}

#[test]
fn ops_evaluate_reports_six_dimensions() {
    let runs = tempfile::tempdir().unwrap();
    let data = common::dataset_path("cars");
    let cassette = common::cassette_path("cars_e2e.json");
    let out = autoviz(&[
        "ops",
        "evaluate",
        "--data",
        path_str(&data),
        "--goal-index",
        "0",
        "--cassette",
        path_str(&cassette),
        "--run-dir",
        path_str(runs.path()),
    ]);
    let report = stdout_json(&out);
    let scores = report["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 6);
    let mean = scores.iter().map(|s| s["score"].as_f64().unwrap()).sum::<f64>() / 6.0;
    assert!((mean - report["sevq"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn benchmark_subcommand_writes_reports() {
    let runs = tempfile::tempdir().unwrap();
    let corpus = common::repo_root().join("fixtures/datasets");
    let cassette = common::cassette_path("benchmark.json");
    let report = runs.path().join("report.csv");
    let out = autoviz(&[
        "benchmark",
        "--corpus",
        path_str(&corpus),
        "--cassette",
        path_str(&cassette),
        "--format",
        "csv",
        "--out",
        path_str(&report),
        "--run-dir",
        path_str(runs.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("grammar,condition,E,T,ver,mean_sevq"));
    assert_eq!(lines.count(), 4);
}
