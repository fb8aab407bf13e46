use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use instreval::store::{load_population, write_population, EmbeddingSet, InstrumentMeta};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_instreval"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--out", p(&out)];
    args.extend_from_slice(extra);
    assert!(run(&args).status.success());
    out
}

#[test]
fn fad_of_identical_sets_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.json", &["--preset", "iid", "--cells", "20", "--seed", "3"]);
    let report = json(&run(&["--json", "fad", "--reference", p(&a), "--test", p(&a)]));
    assert_eq!(report["metric"], "fad");
    assert!(report["value"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(report["config"]["reference_path"], p(&a));
}

#[test]
fn tc_star_needs_stats() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.json", &["--preset", "clustered", "--cells", "12"]);
    let out = run(&["tc", "--star", "--reference", p(&a), "--test", p(&a)]);
    assert_eq!(out.status.code(), Some(1));

    let stats = dir.path().join("stats.bin");
    assert!(run(&["build-stats", "--reference", p(&a), "--out", p(&stats)]).status.success());
    let report = json(&run(&["--json", "tc", "--star", "--stats", p(&stats), "--test", p(&a)]));
    let v = report["value"].as_f64().unwrap();
    assert!((0.0..=1.0 + 1e-8).contains(&v));
}

#[test]
fn paired_tc_of_identical_sets_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.json", &["--preset", "clustered", "--cells", "15", "--instruments", "3"]);
    let report = json(&run(&["--json", "tc", "--reference", p(&a), "--test", p(&a)]));
    assert!((report["value"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(report["per_instrument"].as_object().unwrap().len(), 3);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["fad", "--reference", "/nonexistent.json", "--test", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn t2i_coloration_reports_matched_cell() {
    let dir = tempfile::tempdir().unwrap();
    let reference = synth(dir.path(), "ref.json", &["--preset", "clustered", "--seed", "1"]);
    let stats = dir.path().join("stats.bin");
    assert!(run(&["build-stats", "--reference", p(&reference), "--out", p(&stats)]).status.success());
    let generated = synth(dir.path(), "gen.json", &["--preset", "clustered", "--instruments", "1", "--cells", "8", "--seed", "9"]);

    let population = load_population(&reference, true).unwrap();
    let cell = population.keys()[17].cell();
    let mut v = population.vector(17, 0).into_owned();
    v.normalize_mut();
    let prompt = EmbeddingSet::from_instruments(
        v.len(),
        1,
        vec![(InstrumentMeta::new("a soft flute"), vec![(cell, v.iter().copied().collect())])],
    )
    .unwrap();
    let prompt_path = dir.path().join("prompt.json");
    write_population(&prompt, &prompt_path, "prompt.bin").unwrap();

    for method in ["naive", "translation", "coloration"] {
        let report = json(&run(&[
            "--json",
            "t2i-score",
            "--prompt",
            p(&prompt_path),
            "--generated",
            p(&generated),
            "--stats",
            p(&stats),
            "--method",
            method,
        ]));
        assert_eq!(report["config"]["method"], method);
        assert!(report["config"]["matched_cell"]["index"].is_u64());
        let v = report["value"].as_f64().unwrap();
        assert!((-1.0..=1.0).contains(&v));
    }
}

#[test]
fn pairgen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "m.json", &["--preset", "iid", "--cells", "30", "--instruments", "5"]);
    let a = run(&["pairgen", "--manifest", p(&m), "--scheme", "random", "--seed", "11"]);
    let b = run(&["pairgen", "--manifest", p(&m), "--scheme", "random", "--seed", "11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<Value> =
        String::from_utf8(a.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 150);
    for l in &lines {
        assert_eq!(l["target"]["instrument"], l["condition"]["instrument"]);
        assert_eq!(l["scheme"], "random");
        assert_eq!(l["seed"], 11);
    }
    let c = run(&["pairgen", "--manifest", p(&m), "--scheme", "random", "--seed", "12"]);
    assert_ne!(c.stdout, b.stdout);
}

#[test]
fn selftest_passes() {
    let out = run(&["--json", "selftest"]);
    let report = json(&out);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
