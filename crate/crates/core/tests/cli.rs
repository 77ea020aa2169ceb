use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn boosthd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boosthd")).args(args).env_remove("BOOSTHD_OUT").output().unwrap()
}

fn ok(args: &[&str]) -> PathBuf {
    let out = boosthd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn write_raw(path: &Path) {
    let mut s = String::from("subject,acc,eda,label\n");
    for subj in 0..4 {
        for t in 0..240 {
            let stress = (t / 60) % 2 == 1;
            let acc = (t as f64 * 0.37 + subj as f64).sin() + if stress { 1.5 } else { 0.0 };
            let eda = (t as f64 * 0.11).cos() * 0.5 + if stress { 0.8 } else { -0.2 };
            s.push_str(&format!("p{subj},{acc},{eda},{}\n", if stress { "stress" } else { "baseline" }));
        }
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn prep_train_eval_span_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.csv");
    write_raw(&raw);
    let prep = tmp.path().join("prep");
    ok(&[
        "data",
        "prep",
        "--raw",
        raw.to_str().unwrap(),
        "--window",
        "30",
        "--stride",
        "15",
        "--test-subjects",
        "p3",
        "--out",
        prep.to_str().unwrap(),
    ]);
    let manifest = json(&prep.join("manifest.json"));
    assert_eq!(manifest["feature_names"].as_array().unwrap().len(), 8);
    assert_eq!(manifest["label_names"], serde_json::json!(["baseline", "stress"]));
    let test_csv = std::fs::read_to_string(prep.join("test.csv")).unwrap();
    assert!(test_csv.lines().skip(1).all(|l| l.contains("p3")));
    let train_csv = std::fs::read_to_string(prep.join("train.csv")).unwrap();
    assert!(!train_csv.contains("p3"));

    let (tr, te) = (prep.join("train.csv"), prep.join("test.csv"));
    let boost = tmp.path().join("boost");
    ok(&[
        "train",
        "--train",
        tr.to_str().unwrap(),
        "--test",
        te.to_str().unwrap(),
        "--d-total",
        "1000",
        "--n-learners",
        "10",
        "--out",
        boost.to_str().unwrap(),
    ]);
    let metrics = json(&boost.join("metrics.json"));
    assert_eq!(metrics["model"], "boosthd");
    assert_eq!(metrics["rounds"].as_array().unwrap().len(), 10);
    assert!(metrics["test"]["accuracy"].as_f64().unwrap() > 0.6);
    assert!(boost.join("timing.json").exists());

    let single = tmp.path().join("single");
    ok(&[
        "train",
        "--single",
        "--train",
        tr.to_str().unwrap(),
        "--d-total",
        "1000",
        "--n-learners",
        "1",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert_eq!(json(&single.join("metrics.json"))["model"], "onlinehd");

    let eval = tmp.path().join("eval");
    ok(&[
        "eval",
        "--model",
        boost.join("model.bhd").to_str().unwrap(),
        "--data",
        te.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    let em = json(&eval.join("metrics.json"));
    assert_eq!(em["metrics"]["accuracy"], metrics["test"]["accuracy"]);
    assert!(json(&eval.join("timing.json"))["mean_latency_seconds"].as_f64().unwrap() > 0.0);

    let span = tmp.path().join("span");
    let (bm, sm) = (boost.join("model.bhd"), single.join("model.bhd"));
    ok(&[
        "analyze",
        "span",
        "--model",
        bm.to_str().unwrap(),
        "--compare",
        sm.to_str().unwrap(),
        "--out",
        span.to_str().unwrap(),
    ]);
    let sa = json(&span.join("span.json"));
    assert_eq!(sa["models"].as_array().unwrap().len(), 2);
    assert!(sa["sp_ratio"].as_f64().unwrap().is_finite());
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"d_total": 400, "n_learners": 4, "train": {"epochs": 3}}, "data": {"synth": {"n_per_class": 20}}}"#).unwrap();
    let out = tmp.path().join("run");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--d-total", "200", "--out", out.to_str().unwrap()]);
    let written = json(&out.join("config.json"));
    assert_eq!(written["model"]["d_total"], 200);
    assert_eq!(written["model"]["n_learners"], 4);
    assert_eq!(written["model"]["train"]["epochs"], 3);
}

#[test]
fn generated_run_directory_lives_under_out_root() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = ok(&["analyze", "spectral", "--q", "0.5", "--mc-rows", "0", "--out-root", tmp.path().to_str().unwrap()]);
    assert!(dir.starts_with(tmp.path()));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("analyze-spectral-"));
    let s = json(&dir.join("spectral.json"));
    assert!((s["entries"][0]["numeric_mean"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    assert_eq!(boosthd(&["--help"]).status.code(), Some(0));
    assert_eq!(boosthd(&["train", "--no-such-flag"]).status.code(), Some(1));

    std::fs::write(p("bad.json"), r#"{"modle": {}}"#).unwrap();
    assert_eq!(boosthd(&["train", "--config", &p("bad.json"), "--out", &p("r1")]).status.code(), Some(1));
    assert_eq!(boosthd(&["train", "--threads", "0", "--out", &p("r1")]).status.code(), Some(1));
    assert_eq!(boosthd(&["train", "--d-total", "5", "--n-learners", "10", "--out", &p("r1")]).status.code(), Some(1));

    assert_eq!(boosthd(&["train", "--train", &p("missing.csv"), "--out", &p("r2")]).status.code(), Some(2));
    std::fs::write(p("junk.bhd"), b"BHD1 not a model").unwrap();
    std::fs::write(p("d.csv"), "a,label,subject\n1,x,s\n").unwrap();
    assert_eq!(
        boosthd(&["eval", "--model", &p("junk.bhd"), "--data", &p("d.csv"), "--out", &p("r3")]).status.code(),
        Some(2)
    );

    std::fs::write(p("nan.csv"), "a,b,label,subject\n1,x,c,s\n").unwrap();
    assert_eq!(boosthd(&["train", "--train", &p("nan.csv"), "--out", &p("r4")]).status.code(), Some(3));

    for r in ["r1", "r2", "r3", "r4"] {
        assert!(!tmp.path().join(r).exists(), "{r} left partial output");
    }
}

#[test]
fn eval_rejects_feature_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let synth = tmp.path().join("synth");
    ok(&["data", "synth", "--n-features", "3", "--n-per-class", "20", "--out", synth.to_str().unwrap()]);
    ok(&[
        "train",
        "--train",
        synth.join("train.csv").to_str().unwrap(),
        "--d-total",
        "200",
        "--n-learners",
        "2",
        "--out",
        run.to_str().unwrap(),
    ]);
    let other = tmp.path().join("other");
    ok(&["data", "synth", "--n-features", "5", "--n-per-class", "20", "--out", other.to_str().unwrap()]);
    let out = boosthd(&[
        "eval",
        "--model",
        run.join("model.bhd").to_str().unwrap(),
        "--data",
        other.join("test.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
