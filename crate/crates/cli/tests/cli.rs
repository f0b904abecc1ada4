use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn journey(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_journey"))
        .current_dir(dir)
        .args(args)
        .env_remove("JOURNEY_CONFIG_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = journey(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// A small generated dataset shared by a test.
fn generated(dir: &Path) -> PathBuf {
    ok(dir, &["gen", "--guests", "400", "--out", "g"]);
    dir.join("g")
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "--guests", "300", "--seed", "5", "--out", "a"]);
    ok(tmp.path(), &["gen", "--guests", "300", "--seed", "5", "--out", "b"]);
    for f in ["dataset.jsonl", "world.json", "summary.json", "manifest.json"] {
        assert_eq!(read(tmp.path().join("a").join(f)), read(tmp.path().join("b").join(f)), "{f}");
    }
    ok(tmp.path(), &["gen", "--guests", "300", "--seed", "6", "--out", "c"]);
    assert_ne!(read(tmp.path().join("a/dataset.jsonl")), read(tmp.path().join("c/dataset.jsonl")));
    ok(tmp.path(), &["validate", "a/dataset.jsonl"]);
    ok(tmp.path(), &["validate", "--manifest", "a/manifest.json"]);
}

#[test]
fn train_and_eval_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    let args = |out: &'static str| ["train", "--data", "g/dataset.jsonl", "--epochs", "1", "--out", out];
    ok(d, &args("t1"));
    ok(d, &args("t2"));
    for f in ["model.json", "model.bin", "history.csv", "manifest.json"] {
        assert_eq!(read(d.join("t1").join(f)), read(d.join("t2").join(f)), "{f}");
    }
    let e1 = ok(d, &["eval", "--model", "t1/model.json", "--data", "g/dataset.jsonl", "--json"]);
    let e2 = ok(d, &["eval", "--model", "t2/model.json", "--data", "g/dataset.jsonl", "--json"]);
    assert_eq!(e1.stdout, e2.stdout);
    let report: serde_json::Value = serde_json::from_slice(&e1.stdout).unwrap();
    assert_eq!(report["per_milestone"].as_array().unwrap().len(), 6);

    let n1 = ok(d, &["ntc", "--model", "t1/model.json", "--data", "g/dataset.jsonl", "--out", "n1"]);
    let n2 = ok(d, &["ntc", "--model", "t2/model.json", "--data", "g/dataset.jsonl", "--out", "n2"]);
    assert_eq!(n1.stdout, n2.stdout);
    assert_eq!(read(d.join("n1/ntc.csv")), read(d.join("n2/ntc.csv")));
    // 2 features x 3 negatives x 5 buckets
    assert_eq!(String::from_utf8(read(d.join("n1/ntc.csv"))).unwrap().lines().count(), 1 + 30);
}

#[test]
fn multi_seed_results_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    let run = |jobs: &str| {
        ok(
            d,
            &["compare", "--data", "g/dataset.jsonl", "--epochs", "1", "--seeds", "2", "--jobs", jobs, "--json"],
        )
        .stdout
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    let c: serde_json::Value = serde_json::from_slice(&one).unwrap();
    assert_eq!(c["seeds"], serde_json::json!([0, 1]));

    let a = ok(
        d,
        &["ablate", "--data", "g/dataset.jsonl", "--epochs", "1", "--seeds", "2", "--seed", "3", "--out", "ab"],
    );
    let text = String::from_utf8(a.stdout).unwrap();
    for cell in ["unc", "req+book+unc", "c+unc", "all-6"] {
        assert!(text.lines().any(|l| l.starts_with(cell)), "{text}");
    }
    let m: serde_json::Value = serde_json::from_slice(&read(d.join("ab/manifest.json"))).unwrap();
    assert_eq!(m["seeds"], serde_json::json!([3, 4]));
}

#[test]
fn flags_override_files_and_files_override_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    std::fs::create_dir(d.join("cfg")).unwrap();
    std::fs::write(
        d.join("cfg/train.toml"),
        "epochs = 2\n[model]\nbase_tasks = [\"unc\"]\ntwiddler_tasks = []\ncombination = false\n",
    )
    .unwrap();
    ok(d, &["train", "--config", "cfg/train.toml", "--data", "g/dataset.jsonl", "--out", "a"]);
    let history = String::from_utf8(read(d.join("a/history.csv"))).unwrap();
    assert_eq!(history.lines().count(), 1 + 2);
    let m: serde_json::Value = serde_json::from_slice(&read(d.join("a/manifest.json"))).unwrap();
    assert_eq!(m["config"]["train"]["model"]["base_tasks"], serde_json::json!(["unc"]));
    assert_eq!(m["config"]["train"]["learning_rate"], serde_json::json!(1e-3));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);

    ok(d, &["train", "--config", "cfg/train.toml", "--epochs", "1", "--data", "g/dataset.jsonl", "--out", "b"]);
    assert_eq!(String::from_utf8(read(d.join("b/history.csv"))).unwrap().lines().count(), 1 + 1);

    // relative config paths fall back to the config directory
    let o = Command::new(env!("CARGO_BIN_EXE_journey"))
        .current_dir(d)
        .args(["train", "--config", "train.toml", "--data", "g/dataset.jsonl", "--out", "c"])
        .env("JOURNEY_CONFIG_DIR", d.join("cfg"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(d.join("a/model.bin")), read(d.join("c/model.bin")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(&journey(d, &["--help"])), 0);
    assert_eq!(code(&journey(d, &["--version"])), 0);
    assert_eq!(code(&journey(d, &["frobnicate"])), 1);
    assert_eq!(code(&journey(d, &["gen", "--guests", "10"])), 1, "gen without --out");
    assert_eq!(code(&journey(d, &["train", "--data", "missing.jsonl", "--out", "x"])), 1);

    std::fs::write(d.join("typo.json"), r#"{"n_gusts": 5}"#).unwrap();
    let o = journey(d, &["gen", "--config", "typo.json", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_gusts"));
    std::fs::write(d.join("zero.json"), r#"{"n_guests": 0}"#).unwrap();
    let o = journey(d, &["gen", "--config", "zero.json", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_guests"));

    generated(d);
    let text = String::from_utf8(read(d.join("g/dataset.jsonl"))).unwrap();
    let mut lines: Vec<&str> = text.lines().take(3).collect();
    lines.push("{not json");
    std::fs::write(d.join("broken.jsonl"), lines.join("\n")).unwrap();
    assert_eq!(code(&journey(d, &["validate", "broken.jsonl"])), 2);
    assert_eq!(code(&journey(d, &["eval", "--world", "g/world.json", "--data", "broken.jsonl"])), 2);

    std::fs::write(d.join("g/summary.json"), b"{}").unwrap();
    assert_eq!(code(&journey(d, &["validate", "--manifest", "g/manifest.json"])), 2);

    std::fs::write(d.join("wide.json"), r#"{"n_guests": 50, "listing_feature_dim": 5}"#).unwrap();
    ok(d, &["gen", "--config", "wide.json", "--out", "wide"]);
    let o = journey(d, &["eval", "--world", "wide/world.json", "--data", "g/dataset.jsonl"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    ok(d, &["train", "--data", "g/dataset.jsonl", "--epochs", "1", "--out", "t"]);
    let o = journey(d, &["eval", "--model", "t/model.json", "--data", "wide/dataset.jsonl", "--all"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(d.join("hot.json"), r#"{"learning_rate": 1e300}"#).unwrap();
    let o = journey(d, &["train", "--config", "hot.json", "--data", "g/dataset.jsonl", "--out", "h"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn world_oracle_beats_a_trained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    ok(d, &["train", "--data", "g/dataset.jsonl", "--epochs", "1", "--out", "t"]);
    let ndcg = |args: &[&str]| -> f64 {
        let o = ok(d, args);
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["overall"]["mean"].as_f64().unwrap()
    };
    let oracle = ndcg(&["eval", "--world", "g/world.json", "--data", "g/dataset.jsonl", "--all", "--json"]);
    let model = ndcg(&["eval", "--model", "t/model.json", "--data", "g/dataset.jsonl", "--all", "--json"]);
    assert!(oracle > model, "{oracle} vs {model}");
    assert!(oracle < 1.0);
}
