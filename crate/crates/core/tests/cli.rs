use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use model_scout::dataio::write_csv;
use model_scout::evalbench::GaussianClasses;
use serde_json::Value;
use tempfile::TempDir;

struct Project {
    dir: TempDir,
}

impl Project {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = r#"{"bins_per_dim": 8, "index": {"partition_size": 50, "jsd_hashes": 120, "jsd_bands": 30, "minwise_hashes": 64, "minwise_bands": 32}}"#;
        fs::write(dir.path().join("model-scout.json"), config).unwrap();
        Project { dir }
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_model-scout"))
            .arg("--project")
            .arg(self.root())
            .args(args)
            .env_remove("MODEL_SCOUT_SEED")
            .env_remove("MODEL_SCOUT_PROJECT")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Labeled CSV whose class mix is `counts`.
    fn dataset(&self, name: &str, counts: &[usize], seed: u64) -> PathBuf {
        let classes = GaussianClasses::new(3, 3, 3.0, 1.0, 11).unwrap();
        let data = classes.sample(name, counts, seed).unwrap();
        let path = self.root().join(format!("{name}.csv"));
        write_csv(&data, &path).unwrap();
        path
    }

    fn register_three(&self) -> PathBuf {
        let a = self.dataset("alpha", &[200, 200, 200], 1);
        let b = self.dataset("beta", &[500, 50, 50], 2);
        let c = self.dataset("gamma", &[20, 40, 500], 3);
        for p in [&a, &b, &c] {
            self.ok(&["register", p.to_str().unwrap(), "--labels-column", "label"]);
        }
        a
    }
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn register_list_and_duplicates() {
    let p = Project::new();
    let a = p.dataset("alpha", &[100, 100, 100], 1);
    let b = p.dataset("beta", &[300, 10, 10], 2);
    p.ok(&["register", a.to_str().unwrap(), "--labels-column", "label"]);
    p.ok(&["register", b.to_str().unwrap(), "--id", "second", "--source-accuracy", "0.8", "--labels-column", "label"]);
    let list = json(&p.ok(&["list", "--json"]));
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["alpha", "second"]);
    assert_eq!(list[1]["source_accuracy"], 0.8);
    assert!(p.ok(&["list"]).contains("2 models"));

    let dup = p.run(&["register", b.to_str().unwrap(), "--id", "alpha"]);
    assert!(!dup.status.success());
    assert!(String::from_utf8_lossy(&dup.stderr).contains("already registered"));
    assert_eq!(json(&p.ok(&["list", "--json"])).as_array().unwrap().len(), 2);
    assert!(!p.root().join("registry.lock").exists());
}

#[test]
fn signatures_only_keeps_no_data() {
    let p = Project::new();
    let a = p.dataset("alpha", &[100, 100, 100], 1);
    let b = p.dataset("beta", &[300, 10, 10], 2);
    p.ok(&["register", a.to_str().unwrap(), "--signatures-only", "--labels-column", "label"]);
    p.ok(&["register", b.to_str().unwrap(), "--labels-column", "label"]);
    assert!(!p.root().join("datasets/alpha.csv").exists());
    assert!(p.root().join("datasets/beta.csv").exists());
    assert!(p.root().join("signatures/alpha.json").exists());

    // the only requested strategy cannot run, so the command fails but still reports why
    let out = p.run(&["query", a.to_str().unwrap(), "--ignore-column", "label", "--strategy", "js", "--exact", "--json"]);
    assert!(!out.status.success());
    let exact = json(&String::from_utf8(out.stdout).unwrap());
    let js = &exact["strategies"][0];
    assert_eq!(js["available"], false);
    assert!(js["reason"].as_str().unwrap().contains("signatures-only"));

    let report = json(&p.ok(&["query", a.to_str().unwrap(), "--ignore-column", "label", "--json"]));
    let by_name = |n: &str| report["strategies"].as_array().unwrap().iter().find(|s| s["strategy"] == n).unwrap().clone();
    assert_eq!(by_name("js")["method"], "lsh");
    assert_eq!(by_name("js")["ranking"][0]["id"], "alpha");
    assert_eq!(by_name("l2")["ranking"][0]["id"], "alpha");
    assert_eq!(by_name("adaptivity")["available"], false);

    p.ok(&["build-index"]);
    let report = json(&p.ok(&["query", a.to_str().unwrap(), "--ignore-column", "label", "--strategy", "adaptivity", "--json"]));
    assert_eq!(report["strategies"][0]["method"], "two-level index");
    assert_eq!(report["strategies"][0]["ranking"][0]["id"], "alpha");
}

#[test]
fn build_index_and_rebuild_identically() {
    let p = Project::new();
    p.register_three();
    p.ok(&["build-index", "--nu", "auto", "--seed", "5"]);
    let manifest = json(&fs::read_to_string(p.root().join("index/manifest.json")).unwrap());
    assert_eq!(manifest["model_count"], 3);
    assert_eq!(manifest["models"].as_array().unwrap().len(), 3);
    // 600 rows in partitions of 50 for every model
    assert_eq!(manifest["n_u"], 12);
    let first = fs::read(p.root().join("index/tables.jsonl")).unwrap();
    p.ok(&["build-index", "--nu", "auto", "--seed", "5"]);
    assert_eq!(first, fs::read(p.root().join("index/tables.jsonl")).unwrap());
    p.ok(&["build-index", "--nu", "auto", "--seed", "6"]);
    assert_ne!(first, fs::read(p.root().join("index/tables.jsonl")).unwrap());

    let bad = p.run(&["build-index", "--K", "100", "--L", "7"]);
    assert!(!bad.status.success());
}

#[test]
fn seed_comes_from_flag_then_environment() {
    let p = Project::new();
    p.register_three();
    let seed_of = |p: &Project| json(&fs::read_to_string(p.root().join("index/manifest.json")).unwrap())["seeds"]["master"].clone();
    let out = Command::new(env!("CARGO_BIN_EXE_model-scout"))
        .arg("--project")
        .arg(p.root())
        .args(["build-index"])
        .env("MODEL_SCOUT_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(seed_of(&p), 99);
    let out = Command::new(env!("CARGO_BIN_EXE_model-scout"))
        .arg("--project")
        .arg(p.root())
        .args(["build-index", "--seed", "3"])
        .env("MODEL_SCOUT_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(seed_of(&p), 3);
}

#[test]
fn query_rankings() {
    let p = Project::new();
    let alpha = p.register_three();
    p.ok(&["build-index"]);
    let target = alpha.to_str().unwrap();

    for mode in ["--exact", "--lsh"] {
        let r = json(&p.ok(&["query", target, "--ignore-column", "label", "--strategy", "adaptivity", mode, "--json"]));
        assert_eq!(r["strategies"][0]["ranking"][0]["id"], "alpha", "{mode}");
    }

    let text = p.ok(&["query", target, "--ignore-column", "label", "--strategy", "all", "--k", "3"]);
    let blocks: Vec<&str> = text.lines().filter(|l| l.starts_with("== ")).collect();
    assert_eq!(blocks.len(), 5);
    let report = json(&fs::read_to_string(p.root().join("reports/query-alpha.json")).unwrap());
    for s in report["strategies"].as_array().unwrap() {
        assert_eq!(s["available"], true, "{s}");
        assert_eq!(s["ranking"].as_array().unwrap().len(), 3);
    }
    let rows = text
        .lines()
        .filter(|l| l.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit()))
        .count();
    assert_eq!(rows, 15);

    let two = json(&p.ok(&["query", target, "--ignore-column", "label", "--strategy", "l2", "--strategy", "voting", "--k", "1", "--json"]));
    assert_eq!(two["strategies"].as_array().unwrap().len(), 2);
    assert_eq!(two["strategies"][0]["ranking"][0]["id"], "alpha");
}

#[test]
fn stale_index_is_reported() {
    let p = Project::new();
    let alpha = p.register_three();
    p.ok(&["build-index"]);
    let extra = p.dataset("delta", &[10, 300, 10], 4);
    p.ok(&["register", extra.to_str().unwrap(), "--labels-column", "label"]);
    let r = json(&p.ok(&["query", alpha.to_str().unwrap(), "--ignore-column", "label", "--strategy", "adaptivity", "--strategy", "l2", "--json"]));
    assert_eq!(r["strategies"][0]["available"], false);
    assert!(r["strategies"][0]["reason"].as_str().unwrap().contains("stale"));
    assert_eq!(r["strategies"][1]["available"], true);

    let only = p.run(&["query", alpha.to_str().unwrap(), "--ignore-column", "label", "--strategy", "adaptivity", "--lsh"]);
    assert!(!only.status.success());
}

#[test]
fn query_errors() {
    let p = Project::new();
    let none = p.run(&["query", "missing.csv"]);
    assert!(!none.status.success());
    let alpha = p.register_three();
    let wide = p.root().join("wide.csv");
    fs::write(&wide, "a,b\n1,2\n").unwrap();
    let out = p.run(&["query", wide.to_str().unwrap()]);
    assert!(!out.status.success());
    let out = p.run(&["query", alpha.to_str().unwrap(), "--k", "0"]);
    assert!(!out.status.success());
}

const SMALL_BENCH: &str = r#"{
  "seed": 3,
  "pool_rows_per_class": 800,
  "rows_per_class": 60,
  "target_rows_per_class": 40,
  "skews": [
    {"variant": 1, "class": 3, "extra_fraction": 10.0},
    {"variant": 2, "class": 1, "extra_fraction": 10.0},
    {"variant": 3, "class": 7, "extra_fraction": 10.0},
    {"variant": 4, "class": 3, "extra_fraction": 10.0},
    {"variant": 4, "class": 7, "extra_fraction": 10.0}
  ],
  "repetitions": 1,
  "index": {"partition_size": 100, "js_threshold": 0.03, "bucket_width": 0.5}
}
"#;

#[test]
fn bench_writes_reports_and_is_repeatable() {
    let p = Project::new();
    let spec = p.root().join("small.json");
    fs::write(&spec, SMALL_BENCH).unwrap();
    let table = p.ok(&["bench", spec.to_str().unwrap()]);
    assert!(table.starts_with("strategy"));
    let out = p.root().join("reports/bench-small");
    let report = json(&fs::read_to_string(out.join("report.json")).unwrap());
    let summaries = report["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), 7);
    for s in summaries {
        assert!(s["top_k_error"][0].is_number(), "{s}");
        assert!(s["top_k_error"][1].is_number(), "{s}");
    }
    assert_eq!(report["scenarios"].as_array().unwrap().len(), 5);
    let first = fs::read(out.join("rankings.json")).unwrap();
    assert!(out.join("table.txt").exists());

    let again = p.root().join("again");
    p.ok(&["bench", spec.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(first, fs::read(again.join("rankings.json")).unwrap());
}

#[test]
fn malformed_scenario_names_the_line() {
    let p = Project::new();
    let spec = p.root().join("broken.json");
    fs::write(&spec, "{\n  \"seed\": 3,\n  \"n_classes\": \"ten\"\n}\n").unwrap();
    let out = p.run(&["bench", spec.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    fs::write(&spec, "{\"seeds\": 3}").unwrap();
    let out = p.run(&["bench", spec.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn help_and_unknown_commands() {
    let p = Project::new();
    assert!(p.run(&["--help"]).status.success());
    assert!(!p.run(&["frobnicate"]).status.success());
}

#[test]
fn bundled_scenario_is_the_library_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/skewed-five.json");
    let spec: model_scout::evalbench::SkewBenchSpec = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(spec, model_scout::evalbench::SkewBenchSpec::default());
}
