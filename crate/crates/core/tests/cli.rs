use std::path::Path;
use std::process::{Command, Output};

fn naq(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_naq"))
        .args(args)
        .env("NAQ_CACHE_DIR", cache)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, data: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "dataset": {
            "edges": data.join("edges.tsv"),
            "features": data.join("features.naqf"),
            "labels": data.join("labels.tsv"),
            "split": data.join("split.json"),
        },
        "method": "naq-feat",
        "index_k": 10,
        "episodes": { "n_way": 3, "q": 5, "count": 40 },
        "train": { "hidden": 16, "out": 8, "eval_every": 20 },
        "eval": { "n_way": 2, "k_shot": 1, "queries": 4, "test_tasks": 20, "val_tasks": 5 },
        "synth": { "n_classes": 10, "nodes_per_class": 15, "p_in": 0.2, "p_out": 0.01, "d": 12,
                   "feature_signal": 2.0, "noise_sigma": 1.0, "seed": 3 }
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn full_pipeline_with_cache_reuse_and_reproducible_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), &data);
    let cfg = cfg.to_str().unwrap();

    let out = naq(&["synth", "--config", cfg, "--out", data.to_str().unwrap()], &cache);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("features.naqf").exists());

    let out_a = dir.path().join("a");
    let first = naq(&["index", "--config", cfg, "--out", out_a.to_str().unwrap()], &cache);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(!String::from_utf8_lossy(&first.stderr).contains("cache hit"));
    let again = naq(&["index", "--config", cfg, "--out", out_a.to_str().unwrap()], &cache);
    assert!(String::from_utf8_lossy(&again.stderr).contains("cache hit"));
    assert_eq!(first.stdout, again.stdout);

    for cmd in ["episodes", "train", "eval", "analyze"] {
        let o = naq(&[cmd, "--config", cfg, "--out", out_a.to_str().unwrap(), "--seed", "5", "--threads", "2"], &cache);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let table = naq(&["eval", "--config", cfg, "--out", out_a.to_str().unwrap(), "--seed", "5"], &cache);
    assert!(String::from_utf8_lossy(&table.stdout).contains("2-way 1-shot"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_a.join("report.json")).unwrap()).unwrap();
    for key in ["n_way", "k_shot", "tasks", "mean_acc", "ci95", "per_task"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert!(out_a.join("report.json.manifest.json").exists());
    assert!(out_a.join("analysis.json").exists());
    assert!(out_a.join("embeddings.naqf.labels.tsv").exists());

    // a fresh cache and output directory reproduce the report byte for byte
    let out_b = dir.path().join("b");
    let o = naq(&["eval", "--config", cfg, "--out", out_b.to_str().unwrap(), "--seed", "5"], &dir.path().join("cache2"));
    assert!(o.status.success());
    assert_eq!(std::fs::read(out_a.join("report.json")).unwrap(), std::fs::read(out_b.join("report.json")).unwrap());
}

#[test]
fn missing_features_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &dir.path().join("nowhere"));
    let out = naq(&["index", "--config", cfg.to_str().unwrap()], &dir.path().join("cache"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"method": "naq-feat", "metric": "diffusion"}"#).unwrap();
    let out = naq(&["index", "--config", path.to_str().unwrap()], &dir.path().join("cache"));
    assert_eq!(out.status.code(), Some(3));
    let out = naq(&["frobnicate"], &dir.path().join("cache"));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cache = dir.path().join("cache");
    let cfg = write_config(dir.path(), &data);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["train"]["learner"] = "maml".into();
    v["train"]["inner_lr"] = 1e300.into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert!(naq(&["synth", "--config", cfg, "--out", data.to_str().unwrap()], &cache).status.success());
    let out = naq(&["train", "--config", cfg, "--out", dir.path().join("o").to_str().unwrap()], &cache);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
