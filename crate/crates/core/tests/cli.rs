use std::path::Path;
use std::process::{Command, Output};

const BLOBS: &str = r#"{
  "task": "classification",
  "dataset": { "kind": "synth_blobs", "n": 600, "classes": 3, "dim": 2, "separation": 2.0 },
  "model": { "hidden": [16], "dropout_rate": 0.5 },
  "adaptive": { "max_passes": 50, "delta": 0.0005, "patience": 10 },
  "trials": 2,
  "master_seed": 4
}"#;

const HETERO: &str = r#"{
  "task": "regression",
  "dataset": { "kind": "synth_hetero", "n": 500 },
  "model": { "hidden": [16], "dropout_rate": 0.25 },
  "train": { "optimizer": { "kind": "adam", "lr": 0.01 }, "batch_size": 32, "epochs": 10 },
  "split": { "train_fraction": 0.5, "test_fraction": 0.5, "calibration_fraction_of_test": 0.2 },
  "adaptive": { "max_passes": 100, "delta": 0.0005, "patience": 10 },
  "trials": 1
}"#;

fn mccp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mccp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "blobs.json", BLOBS);
    let a = mccp(d.path(), &["run", "--config", &cfg, "--out", "a"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = mccp(d.path(), &["run", "--config", &cfg, "--out", "b"]);
    assert_eq!(code(&b), 0);
    for f in ["results.json", "table.csv", "timing.csv"] {
        assert!(d.path().join("a").join(f).exists(), "{f} missing");
    }
    let ra = std::fs::read(d.path().join("a/results.json")).unwrap();
    let rb = std::fs::read(d.path().join("b/results.json")).unwrap();
    assert_eq!(ra, rb, "results.json must be bit-identical across reruns");
    let table = std::fs::read_to_string(d.path().join("a/table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 5);
}

#[test]
fn overrides_change_the_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "blobs.json", BLOBS);
    let o = mccp(
        d.path(),
        &["run", "--config", &cfg, "--out", "o", "--seed", "99", "--trials", "1", "--methods", "naive,mc-cp"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("o/results.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["master_seed"], 99);
    assert_eq!(v["trials"].as_array().unwrap().len(), 1);
    let methods: Vec<_> = v["summary"].as_array().unwrap().iter().map(|r| r["method"].clone()).collect();
    assert_eq!(methods, vec!["naive", "mc-cp"]);
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let bad_alpha = write(d.path(), "a.json", &BLOBS.replace("\"trials\": 2", "\"conformal\": {\"alpha\": 1.5}, \"trials\": 2"));
    let not_json = write(d.path(), "b.json", "{ nope");
    let cfg = write(d.path(), "ok.json", BLOBS);
    let cases: [&[&str]; 5] = [
        &["run", "--config", &bad_alpha],
        &["run", "--config", &not_json],
        &["run", "--config", "missing.json"],
        &["run", "--config", &cfg, "--methods", "cqr"],
        &["run", "--config", &cfg, "--methods", "bogus"],
    ];
    for args in cases {
        let o = mccp(d.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = mccp(d.path(), &["frobnicate"]);
    assert_eq!(code(&o), 2);
    let o = mccp(d.path(), &["plotdata", "--config", &cfg]);
    assert_eq!(code(&o), 2, "plotdata on a classification task");
}

#[test]
fn runtime_failures_exit_3() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "data.csv", "a,b,y\n1,2,3\n");
    let cfg = write(
        d.path(),
        "c.json",
        r#"{"task": "regression", "dataset": {"kind": "csv", "path": "data.csv", "target": "strength"}}"#,
    );
    let o = mccp(d.path(), &["run", "--config", &cfg]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = write(d.path(), "h.json", HETERO);
    let o = mccp(d.path(), &["trace", "--config", &cfg, "--samples", "100000"]);
    assert_eq!(code(&o), 3, "unknown sample id");
}

#[test]
fn auxiliary_subcommands() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "h.json", HETERO);

    let o = mccp(d.path(), &["synth", "--config", &cfg, "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = std::fs::read_to_string(d.path().join("s/dataset.csv")).unwrap();
    assert_eq!(data.lines().count(), 501);

    let o = mccp(d.path(), &["gradcheck", "--config", &cfg, "--out", "g"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("g/gradcheck.json").exists());

    let o = mccp(d.path(), &["trace", "--config", &cfg, "--out", "t", "--samples", "0,3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = std::fs::read_to_string(d.path().join("t/trace.csv")).unwrap();
    assert!(t.starts_with("sample,pass,dim,variance,diff,count"));
    assert!(t.lines().any(|l| l.starts_with("3,")));

    let o = mccp(d.path(), &["plotdata", "--config", &cfg, "--out", "p", "--methods", "cqr,mc-cp"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = std::fs::read_to_string(d.path().join("p/plotdata.csv")).unwrap();
    assert_eq!(p.lines().next().unwrap().split(',').count(), 2 + 4 * 2);

    let o = mccp(
        d.path(),
        &["sensitivity", "--config", &cfg, "--out", "q", "--deltas", "0.1,0.001", "--patiences", "1,10"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q = std::fs::read_to_string(d.path().join("q/sensitivity.csv")).unwrap();
    assert_eq!(q.lines().count(), 1 + 4);
}
