use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pranc::codec::{estimate_transfer, unpack};

const DATA: &str = "blobs:train=60,test=40,seed=3";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pranc"))
}

fn mlp() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mlp-blobs.cfg")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn train(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("m.pranc");
    ok(bin()
        .args(["train", "--model"])
        .arg(mlp())
        .args(["--data", DATA, "--k", "32", "--epochs", "30", "--batch-size", "32", "--out"])
        .arg(&out)
        .args(extra)
        .output()
        .unwrap());
    out
}

fn field(text: &str, key: &str) -> String {
    text.split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {text:?}"))
        .to_string()
}

#[test]
fn train_then_infer_reports_same_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let packet = train(dir.path(), &["--summary", summary.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    let infer = ok(bin()
        .args(["infer", "--packet"])
        .arg(&packet)
        .arg("--model")
        .arg(mlp())
        .args(["--data", DATA])
        .output()
        .unwrap());
    let acc: f64 = field(&infer, "test_accuracy").parse().unwrap();
    assert!((acc - json["test_accuracy"].as_f64().unwrap()).abs() < 1e-4);
    let on_demand = ok(bin()
        .args(["infer", "--budget", "16", "--packet"])
        .arg(&packet)
        .arg("--model")
        .arg(mlp())
        .args(["--data", DATA])
        .output()
        .unwrap());
    assert_eq!(field(&on_demand, "test_accuracy"), field(&infer, "test_accuracy"));
    assert_eq!(json["k"], 32);
}

#[test]
fn cost_matches_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let packet = train(dir.path(), &[]);
    let len = std::fs::metadata(&packet).unwrap().len();
    let text = ok(bin().args(["cost", "--bitrate", "100", "--packet"]).arg(&packet).output().unwrap());
    let secs: f64 = field(&text, "seconds").parse().unwrap();
    assert!((secs - estimate_transfer(len, 100.0).unwrap()).abs() < 0.01);
    let text = ok(bin().args(["cost", "--params", "11227812"]).output().unwrap());
    assert!(text.contains("41d"), "{text}");
}

#[test]
fn missing_file_exits_with_usage_code() {
    let out = bin()
        .args(["infer", "--packet", "/nonexistent/x.pranc", "--model"])
        .arg(mlp())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(2));
    let out = bin().args(["cost", "--bitrate", "0", "--params", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detached_seed_needs_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("m.ck");
    let packet = train(dir.path(), &["--seed", "9", "--checkpoint", ck.to_str().unwrap()]);
    let detached = dir.path().join("d.pranc");
    ok(bin().args(["pack", "--detached-seed", "--checkpoint"]).arg(&ck).arg("--out").arg(&detached).output().unwrap());
    let a = unpack(&std::fs::read(&packet).unwrap()).unwrap();
    let b = unpack(&std::fs::read(&detached).unwrap()).unwrap();
    assert_eq!(b.master_seed, None);
    assert_eq!(a.alpha, b.alpha);
    let infer = |p: &Path, seed: Option<&str>| {
        let mut c = bin();
        c.args(["infer", "--packet"]).arg(p).arg("--model").arg(mlp()).args(["--data", DATA]);
        if let Some(s) = seed {
            c.args(["--seed", s]);
        }
        c.output().unwrap()
    };
    assert_eq!(infer(&detached, None).status.code(), Some(2));
    assert_eq!(ok(infer(&detached, Some("9"))), ok(infer(&packet, None)));
}

#[test]
fn resume_matches_uninterrupted_training() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("half.ck");
    let run = |epochs: &str, out: &Path, extra: &[&str]| {
        ok(bin()
            .args(["train", "--model"])
            .arg(mlp())
            .args(["--data", DATA, "--k", "32", "--rebuild-every", "5", "--lr-drop-frac", "1", "--batch-size", "32", "--epochs", epochs, "--out"])
            .arg(out)
            .args(extra)
            .output()
            .unwrap())
    };
    let full = dir.path().join("full.pranc");
    run("20", &full, &[]);
    run("10", &dir.path().join("half.pranc"), &["--checkpoint", ck.to_str().unwrap()]);
    let resumed = dir.path().join("resumed.pranc");
    run("20", &resumed, &["--resume", ck.to_str().unwrap()]);
    assert_eq!(std::fs::read(full).unwrap(), std::fs::read(resumed).unwrap());
}

#[test]
fn reconstruct_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    let packet = train(dir.path(), &[]);
    let run = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        ok(bin().args(["reconstruct", "--packet"]).arg(&packet).arg("--model").arg(mlp()).arg("--out").arg(&out).args(extra).output().unwrap());
        std::fs::read(out).unwrap()
    };
    let full = run(&[], "a.bin");
    assert_eq!(full.len(), 99 * 4);
    assert_eq!(run(&["--workers", "4"], "b.bin"), full);
    assert_eq!(run(&["--range", "10..30"], "c.bin"), full[40..120]);
    let chunked = dir.path().join("d.bin");
    ok(bin()
        .env("PRANC_CHUNK", "7")
        .args(["reconstruct", "--packet"])
        .arg(&packet)
        .arg("--model")
        .arg(mlp())
        .arg("--out")
        .arg(&chunked)
        .output()
        .unwrap());
    assert_eq!(std::fs::read(chunked).unwrap(), full);
}

#[test]
fn ablate_k_rows_and_duplicates() {
    let common = |ks: &str| {
        let mut c = bin();
        c.args(["ablate-k", "--model"]).arg(mlp()).args(["--data", DATA, "--epochs", "20", "--batch-size", "32", "--ks", ks]);
        c.output().unwrap()
    };
    let text = ok(common("1,8,32"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,accuracy");
    assert_eq!(lines.len(), 4);
    let k1: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(k1 < 0.9, "k=1 should be far from perfect: {k1}");
    assert_eq!(common("4,4").status.code(), Some(2));
}

#[test]
fn partial_curve_and_seed_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let packet = train(dir.path(), &[]);
    let text = ok(bin()
        .args(["partial-curve", "--prefixes", "0,16,32", "--packet"])
        .arg(&packet)
        .arg("--model")
        .arg(mlp())
        .args(["--data", DATA])
        .output()
        .unwrap());
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(text.lines().next(), Some("ordering,prefix,accuracy"));
    assert_eq!(rows.len(), 6);
    let at = |o: &str, p: &str| rows.iter().find(|r| r[0] == o && r[1] == p).unwrap()[2].to_string();
    assert_eq!(at("natural", "32"), at("sorted", "32"));
    assert_eq!(at("natural", "0"), at("sorted", "0"));

    let infer = ok(bin().args(["infer", "--packet"]).arg(&packet).arg("--model").arg(mlp()).args(["--data", DATA]).output().unwrap());
    let text = ok(bin()
        .args(["seed-sensitivity", "--deltas", "-1,0,1", "--packet"])
        .arg(&packet)
        .arg("--model")
        .arg(mlp())
        .args(["--data", DATA])
        .output()
        .unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed_delta,accuracy");
    assert_eq!(lines[2], format!("0,{}", field(&infer, "test_accuracy")));
}

#[test]
fn budget_and_histogram() {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/conv-bn-cifar.cfg");
    let text = ok(bin().args(["budget", "--k", "1000", "--model"]).arg(cfg).output().unwrap());
    assert!(text.starts_with("1,000 + (160)"), "{text}");
    let dir = tempfile::tempdir().unwrap();
    let packet = train(dir.path(), &[]);
    let text = ok(bin().args(["alpha-hist", "--bins", "5", "--packet"]).arg(packet).output().unwrap());
    let total: usize = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 32);
}

#[test]
fn regress_emits_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    ok(bin()
        .args(["regress", "--model"])
        .arg(mlp())
        .args(["--data", DATA, "--k", "16", "--full-epochs", "20", "--pranc-epochs", "10", "--csv"])
        .arg(&csv)
        .output()
        .unwrap());
    let text = std::fs::read_to_string(csv).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["full", "regress_span", "pranc"]);
}
