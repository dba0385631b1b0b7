//! The `smad` binary end to end on a tiny dataset.

use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use smad::benchmark;

fn smad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smad"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = smad(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tree_hash(root: &Path) -> String {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

const TINY: &str = r#"{"train": {"epochs": 1, "batch_size": 8, "lr_start": 0.01,
  "backbone": {"input": [3, 112, 112], "channels": [2, 2, 2, 2], "feature_dim": 4}}}"#;

#[test]
fn workflow_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("tiny.json"), TINY).unwrap();

    let usage = smad(dir, &["synth", "--identities", "1", "--out", "bad"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(smad(dir, &["no-such-command"]).status.code(), Some(2));

    ok(dir, &["synth", "--identities", "6", "--per-id", "4", "--seed", "3", "--out", "ds"]);
    let h1 = tree_hash(&dir.join("ds"));
    ok(dir, &["synth", "--identities", "6", "--per-id", "4", "--seed", "3", "--out", "ds2"]);
    assert_eq!(h1, tree_hash(&dir.join("ds2")));
    // existing output is kept
    assert!(ok(dir, &["synth", "--identities", "6", "--out", "ds"]).contains("skipping"));
    assert_eq!(h1, tree_hash(&dir.join("ds")));

    ok(dir, &["pair", "--manifest", "ds/manifest.json", "--pairs-per-id", "2", "--seed", "3", "--out", "plan.json"]);
    ok(dir, &[
        "morph", "--root", "ds", "--manifest", "ds/manifest.json", "--plan", "plan.json",
        "--selfmorph-fraction", "0.5", "--seed", "3", "--out", "ds/all.json",
    ]);
    ok(dir, &["protocols", "--manifest", "ds/all.json", "--name", "p1", "--out", "prot/index.json"]);
    ok(dir, &["align", "--root", "ds", "--manifest", "ds/all.json", "--settings", "d", "--out", "aligned"]);
    ok(dir, &[
        "--config", "tiny.json", "train", "--root", "aligned/d", "--manifest", "ds/all.json",
        "--setting", "d", "--out", "run",
    ]);
    ok(dir, &[
        "score", "--checkpoint", "run/checkpoint.bin", "--root", "aligned/d",
        "--protocols", "prot/index.json", "--out", "scores.csv",
    ]);
    ok(dir, &["eval", "--protocols", "prot/index.json", "--scores", "scores.csv", "--out", "report.json"]);

    // the CLI report equals an in-process evaluation of the same files
    let protocols = benchmark::read_protocols(&dir.join("prot/index.json")).unwrap();
    let scores = benchmark::read_scores(&dir.join("scores.csv")).unwrap();
    let direct = benchmark::evaluate(&protocols, &scores).unwrap();
    assert_eq!(std::fs::read_to_string(dir.join("report.json")).unwrap(), direct.to_json().unwrap());

    // missing rows: integrity exit code and every missing path listed
    let text = std::fs::read_to_string(dir.join("scores.csv")).unwrap();
    let kept: Vec<&str> = text.lines().take(5).collect();
    std::fs::write(dir.join("partial.csv"), kept.join("\n") + "\n").unwrap();
    let missing = smad(dir, &["eval", "--protocols", "prot/index.json", "--scores", "partial.csv", "--out", "r2.json"]);
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8_lossy(&missing.stderr);
    let scored: Vec<&str> = kept[2..].iter().map(|l| l.split(',').next().unwrap()).collect();
    for p in smad::pipeline::protocol_paths(&protocols) {
        assert_eq!(err.contains(&p), !scored.contains(&p.as_str()), "{p}");
    }

    ok(dir, &[
        "heatmap", "--checkpoint", "run/checkpoint.bin", "--root", "aligned/d",
        "--manifest", "ds/all.json", "--class", "morph", "--out", "hm",
    ]);
    let pngs: Vec<String> = std::fs::read_dir(dir.join("hm"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert_eq!(pngs.len(), protocols[0].morph.len() + 1);
    assert!(pngs.contains(&"mean.png".to_string()));

    let sweep = [
        "--config", "tiny.json", "sweep", "--root", "ds", "--manifest", "ds/all.json",
        "--train-manifest", "ds/all.json", "--protocols", "prot/index.json",
        "--settings", "d,e", "--variant", "fused", "--out", "sweep",
    ];
    ok(dir, &sweep);
    let csv = std::fs::read_to_string(dir.join("sweep/sweep_fused.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(ok(dir, &sweep).contains("cached settings: de"));
}

#[test]
fn config_with_missing_path_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), r#"{"manifest": "nowhere/manifest.json"}"#).unwrap();
    let out = smad(tmp.path(), &["--config", "c.json", "pair", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(tmp.path().join("c.json"), r#"{"unknown_key": 1}"#).unwrap();
    let out = smad(tmp.path(), &["--config", "c.json", "pair", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(3));
}
