use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use serde_json::Value;

fn corrsync(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrsync"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = corrsync(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic collection shared by the tests.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--shapes", "4", "--points", "120", "--landmarks", "6", "--out", "syn"];
    args.extend_from_slice(extra);
    ok(dir, &args);
    dir.join("syn/manifest.json")
}

#[test]
fn clap_definition_is_consistent() {
    corrsync_cli::Cli::command().debug_assert();
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(corrsync(d, &["--bogus"]).status.code(), Some(2));
    assert_eq!(corrsync(d, &["propagate", "--source", "a", "--target", "b"]).status.code(), Some(2));
    assert_eq!(
        corrsync(d, &["propagate", "--manifest", "missing.json", "--source", "a", "--target", "b"]).status.code(),
        Some(1)
    );
    synth(d, &[]);
    let bad_lambda = corrsync(d, &["propagate", "--manifest", "syn/manifest.json", "--source", "s0", "--target", "s1", "--lambda", "1.5"]);
    assert_eq!(bad_lambda.status.code(), Some(2));
    let unknown_shape = corrsync(d, &["propagate", "--manifest", "syn/manifest.json", "--source", "s0", "--target", "nope"]);
    assert_eq!(unknown_shape.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown_shape.stderr).starts_with("error:"));
    std::fs::write(d.join("bad.toml"), "lamda = 0.5\n").unwrap();
    assert_eq!(corrsync(d, &["--config", "bad.toml", "holonomy", "--trials", "1"]).status.code(), Some(2));
}

#[test]
fn synth_then_propagate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = synth(d, &["--maps", "ground-truth"]);
    assert!(std::fs::read_to_string(&manifest).unwrap().contains("\"provenance\""));
    ok(d, &["propagate", "--manifest", "syn/manifest.json", "--source", "s0", "--target", "s2", "--out", "soft.json"]);
    let doc = json(&d.join("soft.json"));
    let keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys[0], "provenance");
    assert_eq!(doc["provenance"]["command"], "propagate");
    assert_eq!(doc["source"], "s0");
    assert_eq!(doc["target"], "s2");
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for (row, mle) in rows.iter().zip(doc["mle"].as_array().unwrap()) {
        let support = row["support"].as_array().unwrap();
        assert_eq!(support.len(), 1);
        let total: f64 = support.iter().map(|e| e[1].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(mle[0], row["source_index"]);
        assert_eq!(mle[1], mle[0]);
    }
}

#[test]
fn lattice_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.csv", "b.csv"] {
        ok(d, &["--seed", "11", "lattice", "--side", "9", "--walks", "10", "--out", name, "--summary", &format!("sum_{name}")]);
    }
    let a = std::fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.csv")).unwrap());
    assert_eq!(std::fs::read(d.join("sum_a.csv")).unwrap(), std::fs::read(d.join("sum_b.csv")).unwrap());
    assert!(body(&d.join("a.csv")).starts_with("walk_id,step,x,y\n"));
    ok(d, &["--seed", "12", "lattice", "--side", "9", "--walks", "10", "--out", "c.csv"]);
    assert_ne!(body(&d.join("a.csv")), body(&d.join("c.csv")));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &[]);
    std::fs::write(d.join("run.toml"), "manifest = \"syn/manifest.json\"\nlambda = 0.5\nout_dir = \"results\"\n").unwrap();
    ok(d, &["--config", "run.toml", "propagate", "--source", "s0", "--target", "s1"]);
    let doc = json(&d.join("results/soft.json"));
    assert_eq!(doc["provenance"]["config"]["lambda"], 0.5);
    assert_eq!(doc["lambda"], 0.5);
    ok(d, &["--config", "run.toml", "propagate", "--source", "s0", "--target", "s1", "--lambda", "0.9"]);
    let doc = json(&d.join("results/soft.json"));
    assert_eq!(doc["provenance"]["config"]["lambda"], 0.9);
    assert_eq!(doc["provenance"]["config"]["manifest"], "syn/manifest.json");
}

#[test]
fn flow_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &[]);
    let m = "syn/manifest.json";
    ok(d, &["flow", "--manifest", m, "--source", "s0", "--target", "s3", "--out", "flow.csv", "--paths-out", "paths.csv"]);
    let edges = body(&d.join("flow.csv"));
    assert!(edges.starts_with("from,to,weight,distance\n"));
    assert!(edges.contains("\ns0,s3,"));
    let matrix = body(&d.join("flow_matrix.csv"));
    assert!(matrix.starts_with("id,s0,s1,s2,s3\n"));
    assert_eq!(matrix.lines().count(), 5);
    let paths = body(&d.join("paths.csv"));
    let probs: f64 = paths.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((probs - 1.0).abs() < 1e-9);
    for method in ["direct", "mst", "shortest"] {
        let out = format!("{method}.csv");
        ok(d, &["baseline", "--manifest", m, "--method", method, "--source", "s0", "--target", "s3", "--out", &out]);
        let text = std::fs::read_to_string(d.join(&out)).unwrap();
        assert!(text.lines().any(|l| l.starts_with("# path: s0")));
        assert_eq!(body(&d.join(&out)).lines().count(), 120);
    }
    assert_eq!(corrsync(d, &["baseline", "--manifest", m, "--method", "magic", "--source", "s0", "--target", "s3"]).status.code(), Some(2));
}

#[test]
fn benchmark_match_stability_holonomy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--corrupt", "0.3"]);
    let m = "syn/manifest.json";
    ok(d, &["benchmark", "--manifest", m, "--lambda", "0.9,0.978", "--out", "curves.csv", "--svg", "curves.svg"]);
    let curves = body(&d.join("curves.csv"));
    assert!(curves.starts_with("method,lambda,threshold,fraction\n"));
    assert_eq!(curves.lines().count(), 1 + 7 * 100);
    assert!(std::fs::read_to_string(d.join("curves.svg")).unwrap().contains("<svg"));

    ok(d, &["match", "--manifest", m, "--pair", "s0,s1", "--radius", "0.2", "--out", "matches.csv", "--dense", "dense.csv"]);
    let matches = body(&d.join("matches.csv"));
    assert!(matches.starts_with("source_index,target_index,provenance\n"));
    assert!(matches.lines().count() > 1);
    assert_eq!(body(&d.join("dense.csv")).lines().count(), 120);
    assert_eq!(corrsync(d, &["match", "--manifest", m, "--pair", "s0,s1"]).status.code(), Some(2));

    ok(d, &["stability", "--manifest", m, "--remove", "s3", "--out", "stab.json"]);
    let doc = json(&d.join("stab.json"));
    assert_eq!(doc["provenance"]["command"], "stability");
    assert_eq!(doc["pairs"].as_array().unwrap().len(), 6);

    ok(d, &["--seed", "5", "holonomy", "--trials", "5", "--steps", "200", "--out", "h.csv"]);
    assert_eq!(body(&d.join("h.csv")).lines().count(), 6);
}
