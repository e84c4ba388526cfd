//! End-to-end checks of the `nhde` binary: exit codes, error surfaces,
//! stdout contracts, and byte-level reproducibility of artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn nhde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhde"))
        .args(args)
        .output()
        .expect("spawning the binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_dataset_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = nhde(&[
        "--out-dir",
        out_dir.to_str().unwrap(),
        "baseline",
        "--method",
        "random",
        "--instances",
        dir.path().join("missing.jsonl").to_str().unwrap(),
    ]);
    assert!(!out.status.success(), "must fail on a missing dataset");
    assert!(
        stderr(&out).contains("missing.jsonl"),
        "error names the path: {}",
        stderr(&out)
    );
    // The command failed before producing anything, so no stray artifacts.
    assert!(
        !out_dir.join("front.csv").exists() && !out_dir.join("metrics.json").exists(),
        "failed run must not leave partial outputs"
    );
}

#[test]
fn hv_scores_a_known_front() {
    let dir = tempfile::tempdir().unwrap();
    let front = dir.path().join("front.csv");
    std::fs::write(&front, "f1,f2\n1,3\n2,2\n3,1\n").unwrap();
    let out = nhde(&[
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
        "hv",
        "--front",
        front.to_str().unwrap(),
        "--reference",
        "4,4",
        "--ideal",
        "0,0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // Dominated boxes: 1*3 remaining staircase = 6 of a 16-unit box.
    assert_eq!(stdout(&out).trim(), "0.375");
}

#[test]
fn hv_rejects_out_of_box_points_unless_clipped() {
    let dir = tempfile::tempdir().unwrap();
    let front = dir.path().join("front.csv");
    std::fs::write(&front, "f1,f2\n5,1\n").unwrap();
    let strict = nhde(&[
        "--out-dir",
        dir.path().join("o1").to_str().unwrap(),
        "hv",
        "--front",
        front.to_str().unwrap(),
        "--reference",
        "4,4",
    ]);
    assert!(!strict.status.success());
    let clipped = nhde(&[
        "--out-dir",
        dir.path().join("o2").to_str().unwrap(),
        "hv",
        "--front",
        front.to_str().unwrap(),
        "--reference",
        "4,4",
        "--clip",
    ]);
    assert!(clipped.status.success(), "{}", stderr(&clipped));
    assert_eq!(stdout(&clipped).trim(), "0");
}

#[test]
fn gen_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| -> Vec<u8> {
        let out_dir = dir.path().join(name);
        let out = nhde(&[
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
            "gen",
            "--kind",
            "motsp",
            "--n",
            "8",
            "--count",
            "2",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("dataset.jsonl")).unwrap()
    };
    let a = run("a", "11");
    let b = run("b", "11");
    let c = run("c", "12");
    assert_eq!(a, b, "same seed must give identical bytes");
    assert_ne!(a, c, "different seed must give a different dataset");
}

fn write_fast_config(path: &Path) {
    std::fs::write(
        path,
        "[problem]\nkind = \"motsp\"\nn = 8\nM = 2\n\n[train]\nE = 1\nB = 2\nN_prime = 2\n",
    )
    .unwrap();
}

#[test]
fn train_then_solve_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fast.toml");
    write_fast_config(&cfg);

    let gen_dir = dir.path().join("gen");
    let out = nhde(&[
        "--out-dir",
        gen_dir.to_str().unwrap(),
        "--seed",
        "5",
        "gen",
        "--kind",
        "motsp",
        "--n",
        "8",
        "--count",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dataset = gen_dir.join("dataset.jsonl");

    let train_dir = dir.path().join("train");
    let out = nhde(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        train_dir.to_str().unwrap(),
        "--seed",
        "5",
        "train",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = train_dir.join("checkpoint.json");
    assert!(train_dir.join("train_log.csv").exists());
    assert!(train_dir.join("manifest.json").exists());

    let solve = |name: &str| -> Vec<u8> {
        let out_dir = dir.path().join(name);
        let out = nhde(&[
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--seed",
            "9",
            "solve",
            "--model",
            ckpt.to_str().unwrap(),
            "--instances",
            dataset.to_str().unwrap(),
            "--subproblems",
            "5",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("front.csv")).unwrap()
    };
    let first = solve("s1");
    let second = solve("s2");
    assert_eq!(first, second, "same seed, same checkpoint: identical front bytes");
}

#[test]
fn corrupted_checkpoint_reports_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("gen");
    let out = nhde(&[
        "--out-dir",
        gen_dir.to_str().unwrap(),
        "gen",
        "--kind",
        "motsp",
        "--n",
        "8",
        "--count",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = dir.path().join("bad.json");
    std::fs::write(&ckpt, "{\"format_version\": 1, \"tensors\": []}").unwrap();
    let out = nhde(&[
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
        "solve",
        "--model",
        ckpt.to_str().unwrap(),
        "--instances",
        gen_dir.join("dataset.jsonl").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("schema error"),
        "schema violations must be called out: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nlearning_rate = 0.1\n").unwrap();
    let out = nhde(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
        "gen",
        "--count",
        "1",
    ]);
    assert!(!out.status.success(), "typo'd config keys must not pass silently");
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

#[test]
fn ws_dp_prints_the_scalarized_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let gen_dir = dir.path().join("gen");
    let out = nhde(&[
        "--out-dir",
        gen_dir.to_str().unwrap(),
        "--seed",
        "3",
        "gen",
        "--kind",
        "mokp",
        "--n",
        "10",
        "--count",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out_dir = dir.path().join("dp");
    let out = nhde(&[
        "--out-dir",
        out_dir.to_str().unwrap(),
        "baseline",
        "--method",
        "ws-dp",
        "--instances",
        gen_dir.join("dataset.jsonl").to_str().unwrap(),
        "--weight",
        "0.5,0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let value: f64 = stdout(&out).trim().parse().expect("stdout is a number");
    assert!(value.is_finite() && value > 0.0);
    assert!(out_dir.join("front.csv").exists());
    assert!(out_dir.join("metrics.json").exists());
}
