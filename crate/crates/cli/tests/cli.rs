use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use delta_verifier::store::{read_centroids, write_manifest, write_record, Label, ManifestEntry};
use delta_verifier::{LayerMatrix, TrajectoryRecord};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delta-verify"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn synth(dir: &Path, per_class: usize) {
    ok(
        dir,
        &[
            "synth", "--out", "data", "--per-class", &per_class.to_string(), "--num-layers", "4",
            "--dim", "6", "--problems", "4",
        ],
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_respects_per_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, 10);
    let out = ok(dir, &["build", "--manifest", "data", "--out", "c.bin"]);
    assert!(out.contains("n_succ=10 n_fail=10 layers=4 dim=6"), "{out}");
    let c = read_centroids(dir.join("c.bin")).unwrap();
    assert_eq!((c.n_succ, c.n_fail), (10, 10));
    assert_eq!(c.model_tag, "synthetic");

    ok(dir, &["build", "--manifest", "data", "--per-class", "5", "--out", "c5.bin"]);
    let c = read_centroids(dir.join("c5.bin")).unwrap();
    assert_eq!((c.n_succ, c.n_fail), (5, 5));
}

fn record(id: &str, label: Label) -> TrajectoryRecord {
    TrajectoryRecord {
        record_id: id.into(),
        problem_id: "p".into(),
        answer: "1".into(),
        label,
        model_tag: "m".into(),
        h_start: LayerMatrix::zeros(2, 2).unwrap(),
        h_end: LayerMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
    }
}

#[test]
fn build_without_failures_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for id in ["a", "b"] {
        write_record(&record(id, Label::Success), dir.join(format!("{id}.traj"))).unwrap();
    }
    assert_eq!(code(dir, &["build", "--manifest", ".", "--out", "c.bin"]), 3);
    assert!(!dir.join("c.bin").exists());
}

#[test]
fn classify_writes_one_row_per_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, 12);
    ok(dir, &["build", "--manifest", "data", "--out", "c.bin"]);
    ok(dir, &["classify", "--manifest", "data", "--centroids", "c.bin", "--out", "cls"]);
    let table = fs::read_to_string(dir.join("cls/classify.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 24);
    let report = json(&dir.join("cls/classify.json"));
    assert!(report["accuracy"].as_f64().unwrap() >= 0.9);

    let stdout = ok(dir, &["classify", "--manifest", "data", "--centroids", "c.bin"]);
    assert!(stdout.starts_with("record_id\t"));
    assert!(stdout.contains("accuracy"));
}

#[test]
fn oracle_scores_make_top1_equal_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, 16);
    ok(dir, &["build", "--manifest", "data", "--out", "c.bin"]);
    ok(
        dir,
        &[
            "rerank", "--manifest", "data", "--centroids", "c.bin", "--oracle-scores", "--k", "1,4,1000",
            "--out", "rr",
        ],
    );
    let r = json(&dir.join("rr/rerank.json"));
    assert_eq!(r["top_at_1"], r["pass_at_n"]);
    assert_eq!(r["top_maj_at_k"]["1"], r["top_at_1"]);
    // k past the candidate count saturates at the majority vote
    assert_eq!(r["top_maj_at_k"]["1000"], r["majority_at_n"]);
    assert_eq!(r["problems"].as_array().unwrap().len(), 4);
}

#[test]
fn analyze_writes_curve_and_projections() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, 10);
    ok(dir, &["analyze", "--manifest", "data", "--out", "an"]);
    let mut names: Vec<String> = fs::read_dir(dir.join("an"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    // default layers for L=4 are 1, 2, 4
    assert_eq!(names, ["curve.csv", "pca_layer_1.csv", "pca_layer_2.csv", "pca_layer_4.csv"]);
    let curve = fs::read_to_string(dir.join("an/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5);

    ok(dir, &["analyze", "--manifest", "data", "--layers", "3", "--out", "an3"]);
    assert!(dir.join("an3/pca_layer_3.csv").exists());
    assert_eq!(code(dir, &["analyze", "--manifest", "data", "--layers", "9", "--out", "x"]), 2);
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, 20);
    ok(dir, &["build", "--manifest", "data", "--seed", "3", "--per-class", "15", "--out", "a.bin"]);
    ok(
        dir,
        &["--single-thread", "build", "--manifest", "data", "--seed", "3", "--per-class", "15", "--out", "b.bin"],
    );
    assert_eq!(fs::read(dir.join("a.bin")).unwrap(), fs::read(dir.join("b.bin")).unwrap());

    ok(dir, &["build", "--manifest", "data", "--seed", "4", "--per-class", "15", "--out", "c.bin"]);
    assert_ne!(fs::read(dir.join("a.bin")).unwrap(), fs::read(dir.join("c.bin")).unwrap());
}

#[test]
fn truncated_records_are_skipped_unless_allowed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut entries = Vec::new();
    for (id, label, truncated) in [
        ("a", Label::Success, false),
        ("b", Label::Failure, false),
        ("c", Label::Failure, true),
    ] {
        write_record(&record(id, label), dir.join(format!("{id}.traj"))).unwrap();
        entries.push(ManifestEntry {
            record_id: id.into(),
            problem_id: "p".into(),
            label,
            answer: "1".into(),
            path: format!("{id}.traj").into(),
            truncated,
        });
    }
    write_manifest(&entries, dir).unwrap();
    let out = ok(dir, &["build", "--manifest", ".", "--out", "c.bin"]);
    assert!(out.contains("n_succ=1 n_fail=1"), "{out}");
    let out = ok(dir, &["build", "--manifest", ".", "--allow-truncated", "--out", "c.bin"]);
    assert!(out.contains("n_succ=1 n_fail=2"), "{out}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(dir, &["build"]), 2);
    assert_eq!(code(dir, &["no-such-command"]), 2);
    assert_eq!(code(dir, &["classify", "--manifest", "missing", "--centroids", "c.bin"]), 4);

    synth(dir, 5);
    ok(dir, &["build", "--manifest", "data", "--out", "c.bin"]);
    assert_eq!(code(dir, &["rerank", "--manifest", "data", "--centroids", "c.bin", "--k", "0"]), 2);
    assert_eq!(code(dir, &["classify", "--manifest", "data", "--centroids", "nope.bin"]), 4);

    fs::write(dir.join("bad.bin"), b"not a centroid file").unwrap();
    assert_eq!(code(dir, &["classify", "--manifest", "data", "--centroids", "bad.bin"]), 3);
}
