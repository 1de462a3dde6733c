use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphcond"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn condense_writes_set_manifest_log_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    ok(&[
        "condense",
        "--toy",
        "--gpc",
        "1",
        "--seed",
        "0",
        "--k1",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["graphs_per_class"], 1);
    assert_eq!(m["labels"], serde_json::json!([0, 1]));
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    assert_eq!(
        steps.lines().next().unwrap(),
        "step,class,match_loss,reg_loss,tau,mean_sigma_omega"
    );
    assert_eq!(steps.lines().count(), 1 + 20 * 2);
    for f in [
        "config.json",
        "timing.json",
        "condensed_A.txt",
        "condensed_node_attributes.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn zero_steps_write_the_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    ok(&["condense", "--toy", "--k1", "0", "--out", out.to_str().unwrap()]);
    let set = graphcond::read_condensed(&out).unwrap();
    let ds = graphcond::toy::toy_dataset(50, 0).unwrap();
    let cfg = graphcond::CondenseConfig::default();
    let n = graphcond::average_node_count(&ds).unwrap();
    let init = graphcond::condense::init_synthetic(&ds, 1, n, cfg.seed).unwrap();
    let expected = graphcond::condense::discrete_graphs(&init, graphcond::DiscretizeMode::Threshold, 0).unwrap();
    assert_eq!(set.graphs, expected);
    assert_eq!(fs::read_to_string(out.join("steps.csv")).unwrap().lines().count(), 1);
}

#[test]
fn reruns_share_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let hash = |tag: &str| {
        let out = tmp.path().join(tag);
        ok(&["condense", "--toy", "--k1", "5", "--out", out.to_str().unwrap()]);
        json(&out.join("manifest.json"))["config_hash"].clone()
    };
    assert_eq!(hash("a"), hash("b"));
}

#[test]
fn evaluate_row_counts_follow_seed_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let dir = out.to_str().unwrap();
    ok(&["baseline", "--method", "random", "--toy", "--out", dir]);
    ok(&[
        "evaluate",
        "--condensed",
        dir,
        "--cseeds",
        "1",
        "--tseeds",
        "2",
        "--epochs",
        "20",
    ]);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,dataset,gpc,cseed,tseed,score,cond_seconds,eval_seconds"
    );
    assert_eq!(csv.lines().count(), 1 + 2);
    ok(&[
        "evaluate",
        "--condensed",
        dir,
        "--cseeds",
        "2",
        "--tseeds",
        "3",
        "--epochs",
        "20",
        "--metric",
        "roc_auc",
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 6);
    assert_eq!(report["metric"], "roc_auc");
}

#[test]
fn herding_caches_its_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    let dir = out.to_str().unwrap();
    ok(&["baseline", "--method", "herding", "--toy", "--gpc", "2", "--out", dir]);
    let cache = out.join("embeddings.json");
    let first = fs::read_to_string(&cache).unwrap();
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    ok(&["baseline", "--method", "herding", "--toy", "--gpc", "2", "--out", dir]);
    assert_eq!(fs::read_to_string(&cache).unwrap(), first);
    assert_eq!(fs::read_to_string(out.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn errors_are_one_line_with_a_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("k");
    let out = run(&[
        "baseline",
        "--method",
        "kcenter",
        "--toy",
        "--gpc",
        "41",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=invalid_argument message="), "{err}");

    let out = run(&["evaluate", "--condensed", tmp.path().join("absent").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=missing_file"));

    let out = run(&["condense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=invalid_argument"));

    let out = run(&["condense", "--toy", "--colour", "red"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=usage"));

    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"toy": true, "condense": {"k3": 1}}"#).unwrap();
    let out = run(&["condense", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error kind=json"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"toy": true, "condense": {"k1": 3, "graphs_per_class": 2}}"#).unwrap();
    let out = tmp.path().join("c");
    ok(&[
        "condense",
        "--config",
        cfg.to_str().unwrap(),
        "--k1",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stored = json(&out.join("config.json"));
    assert_eq!(stored["condense"]["k1"], 4);
    assert_eq!(stored["condense"]["graphs_per_class"], 2);
    assert_eq!(json(&out.join("manifest.json"))["graphs_per_class"], 2);
}

#[test]
fn edited_config_is_rejected_by_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let dir = out.to_str().unwrap();
    ok(&["condense", "--toy", "--k1", "2", "--out", dir]);
    let mut stored = json(&out.join("config.json"));
    stored["condense"]["k1"] = 3.into();
    fs::write(out.join("config.json"), stored.to_string()).unwrap();
    let res = run(&["evaluate", "--condensed", dir, "--cseeds", "1", "--tseeds", "1"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error kind=manifest_mismatch"));
}

#[test]
fn diagnose_bound_trials_all_hold() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    ok(&[
        "diagnose",
        "--toy",
        "--bound-trials",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("theorem1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
    assert!(!out.join("terms.csv").exists());
}
