//! End-to-end behavior of the binary: config files, cross-command
//! identities, console output format.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_egoflow");

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_code(args: &[&str]) -> i32 {
    Command::new(BIN)
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn predict_topk_100_prints_identical_values() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    run_ok(&["generate", "--count", "3", "--seed", "2", "--out-dir", ds.to_str().unwrap(), "--quiet"]);
    let ckpt = dir.path().join("m.ckpt");
    run_ok(&[
        "train", "--dataset", ds.to_str().unwrap(), "--epochs", "1",
        "--checkpoint-out", ckpt.to_str().unwrap(), "--quiet",
        "--out-dir", dir.path().join("t").to_str().unwrap(),
    ]);
    let flow = ds.join("000001.flo");
    let plain = run_ok(&["predict", "--checkpoint", ckpt.to_str().unwrap(), "--flow", flow.to_str().unwrap()]);
    let masked = run_ok(&[
        "predict", "--checkpoint", ckpt.to_str().unwrap(), "--flow", flow.to_str().unwrap(),
        "--topk", "100",
    ]);
    assert_eq!(plain, masked);
    assert!(plain.starts_with("predicted t = "));
}

#[test]
fn generated_noiseless_flow_solves_to_manifest_motion() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let cfg = dir.path().join("scene.cfg");
    std::fs::write(&cfg, "objects_min = 0\nobjects_max = 0 # static scene\n").unwrap();
    run_ok(&[
        "generate", "--count", "2", "--seed", "31",
        "--config", cfg.to_str().unwrap(),
        "--out-dir", ds.to_str().unwrap(), "--quiet",
    ]);

    let manifest = std::fs::read_to_string(ds.join("manifest.txt")).unwrap();
    let first = manifest.lines().next().unwrap();
    let fields: Vec<&str> = first.split_whitespace().collect();
    let gt: Vec<f64> = fields[5..8].iter().map(|s| s.parse().unwrap()).collect();

    let flow = ds.join(fields[1]);
    let stdout = run_ok(&["solve", "--flow", flow.to_str().unwrap(), "--robust"]);
    let solved: Vec<f64> = stdout
        .lines()
        .next()
        .unwrap()
        .trim_start_matches("solved t = ")
        .split_whitespace()
        .take(3)
        .map(|s| s.parse().unwrap())
        .collect();

    let dot = gt[0] * solved[0] + gt[1] * solved[1] + gt[2] * solved[2];
    let gt_norm = (gt[0] * gt[0] + gt[1] * gt[1] + gt[2] * gt[2]).sqrt();
    let s_norm = (solved[0] * solved[0] + solved[1] * solved[1] + solved[2] * solved[2]).sqrt();
    let angle = (dot / (gt_norm * s_norm)).clamp(-1.0, 1.0).acos().to_degrees();
    assert!(angle < 0.5, "solved direction {angle} deg off manifest ground truth");
}

#[test]
fn eval_without_checkpoint_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    run_ok(&["generate", "--count", "6", "--seed", "5", "--out-dir", ds.to_str().unwrap(), "--quiet"]);
    let stdout = run_ok(&[
        "eval", "--dataset", ds.to_str().unwrap(), "--metric", "ate",
        "--out-dir", dir.path().join("e").to_str().unwrap(),
    ]);
    assert!(
        stdout.contains("ate mean = 0.00000000e0"),
        "ground-truth self-evaluation not zero: {stdout}"
    );
    let csv = std::fs::read_to_string(dir.path().join("e").join("ate.csv")).unwrap();
    assert!(csv.starts_with("snippet_index,ate\n"));
}

#[test]
fn config_file_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "width = 16\nheight = 8\nseed = 4\n").unwrap();
    let ds = dir.path().join("ds");
    run_ok(&[
        "generate", "--count", "2", "--config", good.to_str().unwrap(),
        "--out-dir", ds.to_str().unwrap(), "--quiet",
    ]);
    // Flow header carries the configured dimensions.
    let flow = std::fs::read(ds.join("000000.flo")).unwrap();
    assert_eq!(u32::from_le_bytes(flow[4..8].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(flow[8..12].try_into().unwrap()), 8);

    let unknown = dir.path().join("unknown.cfg");
    std::fs::write(&unknown, "wobble = 3\n").unwrap();
    assert_eq!(
        run_code(&[
            "generate", "--count", "1", "--config", unknown.to_str().unwrap(),
            "--out-dir", dir.path().join("x").to_str().unwrap(),
        ]),
        2
    );

    let malformed = dir.path().join("broken.cfg");
    std::fs::write(&malformed, "width\n").unwrap();
    assert_eq!(
        run_code(&[
            "generate", "--count", "1", "--config", malformed.to_str().unwrap(),
            "--out-dir", dir.path().join("y").to_str().unwrap(),
        ]),
        2
    );
}

#[test]
fn usage_errors() {
    assert_eq!(run_code(&["eval", "--dataset", "somewhere"]), 1); // no metric, no sweep
    assert_eq!(run_code(&["viz", "--out", "x.ppm"]), 1); // neither flow nor trajectory
    assert_eq!(run_code(&["predict", "--checkpoint", "a", "--flow", "b", "--topk", "150"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let _ = Command::new(BIN)
        .args(["generate", "--count", "2", "--seed", "1", "--out-dir", ds.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(
        run_code(&[
            "eval", "--dataset", ds.to_str().unwrap(), "--sparsity-sweep", "50,0",
            "--checkpoint", "missing.ckpt",
        ]),
        1
    );
}

#[test]
fn sequence_dataset_carries_poses() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("seq");
    run_ok(&[
        "generate", "--count", "6", "--sequence", "--seed", "9",
        "--out-dir", ds.to_str().unwrap(), "--quiet",
    ]);
    assert!(Path::new(&ds.join("poses.txt")).exists());
    let poses = std::fs::read_to_string(ds.join("poses.txt")).unwrap();
    assert_eq!(poses.lines().count(), 6);
    let manifest = std::fs::read_to_string(ds.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 5);

    // Trajectory plot from the written poses.
    let img = dir.path().join("traj.ppm");
    run_ok(&["viz", "--trajectory", ds.join("poses.txt").to_str().unwrap(), "--out", img.to_str().unwrap(), "--quiet"]);
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P6\n512 512\n255\n"));
}
