use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mmbio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbio"))
        .args(args)
        .output()
        .expect("spawn mmbio")
}

fn ok(args: &[&str]) -> String {
    let out = mmbio(args);
    assert!(
        out.status.success(),
        "mmbio {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, subjects: usize) -> String {
    let ds = dir.join("ds");
    ok(&["synth", "--out", ds.to_str().unwrap(), "--subjects", &subjects.to_string(), "--seed", "3"]);
    ds.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(mmbio(&[]).status.code(), Some(1));
    assert_eq!(mmbio(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mmbio(&["verify", "--template", "x"]).status.code(), Some(1));
    assert_eq!(mmbio(&["--backend", "quantum", "config"]).status.code(), Some(1));
    assert_eq!(mmbio(&["--set", "fusion.threshold=7", "config"]).status.code(), Some(1));
    assert_eq!(mmbio(&["--set", "nonsense", "config"]).status.code(), Some(1));
    assert_eq!(mmbio(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.mbt");
    let out = mmbio(&["verify", "--template", s(&missing), "--fingerprint", "a.pgm", "--iris", "b.pgm"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.mbt");
    fs::write(&bad, b"not a template").unwrap();
    let out = mmbio(&["verify", "--template", s(&bad), "--fingerprint", "a.pgm", "--iris", "b.pgm"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mmbio(&["evaluate", "--dataset", s(&dir.path().join("nowhere")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.pgm");
    let mut pgm = b"P5\n64 64\n255\n".to_vec();
    pgm.extend(std::iter::repeat_n(200u8, 64 * 64));
    fs::write(&flat, pgm).unwrap();
    let out = mmbio(&["segment", "--iris", s(&flat), "--out", s(&dir.path().join("seg"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_prints_overrides() {
    let text = ok(&["--backend", "hardware-model", "--set", "fusion.threshold=0.7", "config"]);
    assert!(text.contains("run.backend = hardware-model"), "{text}");
    assert!(text.contains("fusion.threshold = 0.7"), "{text}");

    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, &text).unwrap();
    assert_eq!(ok(&["--config", s(&cfg), "config"]), text);
}

#[test]
fn enroll_is_byte_identical_and_verify_emits_json() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), 2);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let lines = ok(&["enroll", "--dataset", &ds, "--out", s(&a)]);
    ok(&["enroll", "--dataset", &ds, "--out", s(&b), "--subject", "s000"]);
    assert_eq!(lines.lines().count(), 2);
    for line in lines.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["minutiae"].as_u64().unwrap() > 0);
    }
    assert_eq!(fs::read(a.join("s000.mbt")).unwrap(), fs::read(b.join("s000.mbt")).unwrap());
    assert!(!b.join("s001.mbt").exists());

    let tpl = a.join("s000.mbt");
    let genuine: Value = serde_json::from_str(&ok(&[
        "verify",
        "--template",
        s(&tpl),
        "--fingerprint",
        &format!("{ds}/s000/fp_1.pgm"),
        "--iris",
        &format!("{ds}/s000/iris_3.pgm"),
    ]))
    .unwrap();
    assert_eq!(genuine["subject_id"], "s000");
    assert_eq!(genuine["decision"]["accept"], true);

    let impostor: Value = serde_json::from_str(&ok(&[
        "verify",
        "--template",
        s(&tpl),
        "--fingerprint",
        &format!("{ds}/s001/fp_1.pgm"),
        "--iris",
        &format!("{ds}/s001/iris_3.pgm"),
    ]))
    .unwrap();
    assert_eq!(impostor["decision"]["accept"], false);

    // unreadable iris probe: fingerprint-only score, flagged, still exit 0
    let partial: Value = serde_json::from_str(&ok(&[
        "verify",
        "--template",
        s(&tpl),
        "--fingerprint",
        &format!("{ds}/s000/fp_1.pgm"),
        "--iris",
        s(&dir.path().join("nope.pgm")),
    ]))
    .unwrap();
    let fp = genuine["fingerprint"]["similarity"].as_f64().unwrap();
    let fused = partial["decision"]["fused_score"].as_f64().unwrap();
    assert!((fused - 0.4 * fp).abs() < 1e-12);
    assert!(partial["iris"]["failed"].is_string());
}

#[test]
fn evaluate_writes_artifacts_and_backends_agree() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), 3);
    let mut eers = Vec::new();
    for backend in ["reference", "hardware-model"] {
        let out = dir.path().join(backend);
        let summary: Value = serde_json::from_str(&ok(&[
            "--backend",
            backend,
            "evaluate",
            "--dataset",
            &ds,
            "--out",
            s(&out),
        ]))
        .unwrap();
        assert_eq!(summary["genuine_trials"], 6);
        assert_eq!(summary["impostor_trials"], 12);
        let roc = fs::read_to_string(out.join("roc.csv")).unwrap();
        assert_eq!(roc.lines().count(), 202);
        assert_eq!(fs::read_to_string(out.join("trials.jsonl")).unwrap().lines().count(), 18);
        let json: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["backend"], backend);
        assert!(fs::read_to_string(out.join("scores.svg")).unwrap().starts_with("<svg"));
        eers.push(summary["eer"]["fused"].as_f64().unwrap());
    }
    assert!((eers[0] - eers[1]).abs() <= 0.05, "{eers:?}");
}

#[test]
fn segment_and_equiv_dump_reports() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), 1);
    let seg = dir.path().join("seg");
    let report = dir.path().join("fp_stages.json");
    ok(&[
        "--backend",
        "hardware-model",
        "segment",
        "--fingerprint",
        &format!("{ds}/s000/fp_0.pgm"),
        "--out",
        s(&seg),
        "--report",
        s(&report),
    ]);
    for f in ["normalized", "orientation", "filtered", "binary", "skeleton"] {
        assert!(seg.join(format!("{f}.pgm")).exists(), "{f}");
    }
    let stages: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(!stages.as_array().unwrap().is_empty());

    let eye = dir.path().join("eye");
    ok(&["segment", "--iris", &format!("{ds}/s000/iris_0.pgm"), "--out", s(&eye)]);
    for f in ["unwrapped.pgm", "enhanced.pgm", "code_plane1.pgm", "code_mask.pgm", "iris.json"] {
        assert!(eye.join(f).exists(), "{f}");
    }

    let eq = dir.path().join("equiv.json");
    let line: Value = serde_json::from_str(&ok(&["equiv", "--dataset", &ds, "--report", s(&eq)])).unwrap();
    assert_eq!(line["fingerprints"], 3);
    assert_eq!(line["pipelined_identical"], true);
    let full: Value = serde_json::from_str(&fs::read_to_string(&eq).unwrap()).unwrap();
    assert!(full["max_bit_disagreement"].as_f64().unwrap() <= 0.02);
}
