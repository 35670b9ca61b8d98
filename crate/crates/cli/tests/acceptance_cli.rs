//! CLI-level acceptance: reproducibility of `evaluate` across thread counts
//! plus the documented subcommand contracts, exercised through the real
//! binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use spectramin::datasets::synthetic::gaussian_library;
use spectramin::spectra::{GridSpec, SpectrumKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectramin"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn spectramin");
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// C13 — `evaluate --jobs 1` twice gives byte-identical results.json, and
/// `--jobs 4` aggregates to the same bytes (ordered reduction).
#[test]
fn c13_evaluate_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec::new(0.0, 149.0, 150).unwrap();
    let ds = gaussian_library(5, 6, grid, SpectrumKind::Raman, 77);
    ds.save(dir.path().join("ds.json")).unwrap();
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{
            "name": "determinism",
            "kind": "classification",
            "dataset": "ds.json",
            "protocol": "three-per-species",
            "classifier": {"kind": "trees", "config": {"n_trees": 15, "min_split": 2, "seed": 0}},
            "augment": {"technique": "noise"},
            "n_runs": 4,
            "base_seed": 9
        }"#,
    )
    .unwrap();

    for (out, jobs) in [("r1", "1"), ("r2", "1"), ("r4", "4")] {
        run_ok(bin()
            .arg("evaluate")
            .arg("--config")
            .arg(dir.path().join("exp.json"))
            .arg("--out")
            .arg(dir.path().join(out))
            .arg("--jobs")
            .arg(jobs));
    }
    let r1 = std::fs::read(dir.path().join("r1/results.json")).unwrap();
    let r2 = std::fs::read(dir.path().join("r2/results.json")).unwrap();
    let r4 = std::fs::read(dir.path().join("r4/results.json")).unwrap();
    assert_eq!(r1, r2, "same --jobs 1 invocations differ");
    assert_eq!(r1, r4, "--jobs 4 aggregation differs from sequential");
    let m1 = std::fs::read(dir.path().join("r1/report.md")).unwrap();
    let m4 = std::fs::read(dir.path().join("r4/report.md")).unwrap();
    assert_eq!(m1, m4, "report.md differs across jobs");
    println!("[acceptance] C13 evaluate-determinism: PASS (byte-identical across jobs 1/1/4)");
}

/// `predict` on a spectrum identical to a k=1 KNN training exemplar returns
/// that species with score 1.0.
#[test]
fn predict_on_training_exemplar() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = data_dir().join("samples/manifest.json");
    run_ok(bin()
        .arg("ingest")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("ds.json")));
    std::fs::write(dir.path().join("knn.json"), r#"{"k": 1}"#).unwrap();
    run_ok(bin()
        .arg("train")
        .arg("--dataset")
        .arg(dir.path().join("ds.json"))
        .arg("--model")
        .arg("knn")
        .arg("--config")
        .arg(dir.path().join("knn.json"))
        .arg("--out")
        .arg(dir.path().join("knn.smdl")));
    let stdout = run_ok(bin()
        .arg("predict")
        .arg("--model")
        .arg(dir.path().join("knn.smdl"))
        .arg("--input")
        .arg(data_dir().join("samples/betaite_2.txt"))
        .arg("--top")
        .arg("1"));
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(json["top"][0]["species"], "Betaite");
    assert_eq!(json["top"][0]["score"], 1.0);
    let scores: Vec<f64> =
        json["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

/// `fuse --rule mul` with a uniform partner reproduces the other input.
#[test]
fn fuse_mul_uniform_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("a.json"),
        r#"{"classes": ["X", "Y", "Z"], "scores": [0.5, 0.3, 0.2]}"#,
    )
    .unwrap();
    let third = 1.0 / 3.0;
    std::fs::write(
        dir.path().join("b.json"),
        format!(r#"{{"classes": ["X", "Y", "Z"], "scores": [{third}, {third}, {third}]}}"#),
    )
    .unwrap();
    let stdout = run_ok(bin()
        .arg("fuse")
        .arg("--pred-a")
        .arg(dir.path().join("a.json"))
        .arg("--pred-b")
        .arg(dir.path().join("b.json"))
        .arg("--rule")
        .arg("mul"));
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let scores: Vec<f64> =
        json["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in scores.iter().zip([0.5, 0.3, 0.2]) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

/// Failure paths exit with code 1 and leave no partial outputs.
#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("ingest")
        .arg("--manifest")
        .arg(dir.path().join("missing.json"))
        .arg("--out")
        .arg(dir.path().join("ds.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("ds.json").exists());

    // Unknown subcommand is a usage error, also exit 1.
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

/// The libs pipeline round-trips: synthesize a forsterite-like spectrum,
/// estimate its composition, match minerals.
#[test]
fn libs_synth_estimate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("comp.json"), r#"{"Mg": 2, "Si": 1, "O": 4}"#).unwrap();
    run_ok(bin()
        .arg("libs")
        .arg("synth")
        .arg("--lines")
        .arg(data_dir().join("lines_fixture.csv"))
        .arg("--composition")
        .arg(dir.path().join("comp.json"))
        .arg("--out")
        .arg(dir.path().join("spectrum.csv")));
    let stdout = run_ok(bin()
        .arg("libs")
        .arg("estimate")
        .arg("--lines")
        .arg(data_dir().join("lines_fixture.csv"))
        .arg("--input")
        .arg(dir.path().join("spectrum.csv"))
        .arg("--method")
        .arg("cosine")
        .arg("--minerals")
        .arg(data_dir().join("minerals_fixture.csv")));
    let json: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let comp = json["composition"].as_object().unwrap();
    let total: f64 = comp.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(json["minerals"][0][0], "Forsterite");
}
