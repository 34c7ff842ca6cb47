use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pruned-ntk"));
    cmd.env_remove("NTK_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn ntk_output_is_byte_identical_across_runs() {
    let args = ["ntk", "--alpha", "1", "--width", "4", "--depth", "2", "--samples", "1", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["limit"].is_null());
    assert!(v["mad"].is_null());
    assert_eq!(v["per_layer_mean"].as_array().unwrap().len(), 3);
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["ntk", "--width", "8", "--depth", "2", "--samples", "2"];
    let with_flag = run(&[&args[..], &["--seed", "11"]].concat());
    let with_env = bin().args(args).env("NTK_SEED", "11").output().unwrap();
    let default = run(&args);
    assert_eq!(with_flag.stdout, with_env.stdout);
    assert_ne!(with_flag.stdout, default.stdout);
}

#[test]
fn unit_diagonal_limit_is_depth_plus_one() {
    let v = ok_json(&["ntk", "--x", "1,0", "--depth", "3", "--width", "16", "--samples", "2", "--limit"]);
    assert_eq!(v["limit"].as_f64(), Some(4.0));
    let v = ok_json(&["ntk", "--x", "0.6,0.8", "--depth", "3", "--width", "16", "--samples", "2", "--limit"]);
    assert!((v["limit"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert!(v["mad"].as_f64().is_some());
}

#[test]
fn unrescaled_limit_carries_alpha_to_the_depth() {
    let common = ["ntk", "--x", "0.6,0.8", "--x2", "0.8,-0.6", "--depth", "3", "--width", "16", "--samples", "1"];
    let on = ok_json(&[&common[..], &["--alpha", "0.5", "--limit"]].concat());
    let off = ok_json(&[&common[..], &["--alpha", "0.5", "--no-rescale", "--limit"]].concat());
    let (on, off) = (on["limit"].as_f64().unwrap(), off["limit"].as_f64().unwrap());
    assert!((off - 0.125 * on).abs() < 1e-15);
    let per_layer: f64 = ok_json(&[&common[..], &["--alpha", "0.5", "--no-rescale", "--limit"]].concat())
        ["per_layer_limit"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((per_layer - off).abs() < 1e-12);
}

#[test]
fn vectors_can_come_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    fs::write(&p, "0.6,0.8\n").unwrap();
    let from_file = run(&["ntk", "--x", p.to_str().unwrap(), "--width", "8", "--samples", "1"]);
    let inline = run(&["ntk", "--x", "0.6,0.8", "--width", "8", "--samples", "1"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, inline.stdout);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["ntk", "--bogus"])), 2);
    assert_eq!(code(&run(&["ntk", "--x", "1,zz"])), 2);
    assert_eq!(code(&run(&["ntk", "--alpha", "0", "--width", "4"])), 2);
    assert_eq!(code(&run(&["ntk", "--x", "1,0", "--x2", "1,0,0"])), 2);
    let out = run(&["ntk", "--x", "NaN,1", "--width", "4", "--samples", "1"]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());
    let out = run(&["sweep-width", "--widths", "8", "--samples", "1", "--out", "/nonexistent-dir/w.csv"]);
    assert_eq!(code(&out), 4);
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("a.csv");
    let out = run(&[
        "sweep-alpha",
        "--alphas",
        "1.0,0.1",
        "--scaling",
        "quadratic",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(!out_path.exists());
    assert_eq!(code(&run(&["--help"])), 0);
}

fn sweep_width(out: &Path, extra: &[&str]) -> Output {
    let base = ["sweep-width", "--widths", "32", "--samples", "4", "--out", out.to_str().unwrap()];
    run(&[&base[..], extra].concat())
}

#[test]
fn single_width_gives_single_row_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    assert!(sweep_width(&p, &[]).status.success());
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sweep_var,width,mean,std,mad,limit,n_samples");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.5,32,"));
    assert!(sweep_width(&p, &["--control"]).status.success());
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("1.0,32,"));
}

#[test]
fn identical_invocations_give_identical_digests() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = bin()
            .args(["--threads", "2", "sweep-alpha", "--alphas", "1.0,0.5", "--base-width", "16", "--samples", "3"])
            .args(["--depth", "2", "--out", p.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ma: Value = serde_json::from_slice(&fs::read(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    let mb: Value = serde_json::from_slice(&fs::read(dir.path().join("b.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["config"]["command"], "sweep-alpha");
}

#[test]
fn manifest_replay_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    assert!(sweep_width(&p, &["--seed", "3"]).status.success());
    let manifest = dir.path().join("w.csv.manifest.json");
    let replayed = dir.path().join("again.csv");
    let out = run(&["replay", manifest.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&p).unwrap(), fs::read(&replayed).unwrap());
    assert!(dir.path().join("again.csv.manifest.json").exists());

    let mut m: Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    m["outputs"][0]["sha256"] = Value::from("00");
    fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let out = run(&["replay", manifest.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn ntk_file_output_gets_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("k.json");
    let out = run(&["ntk", "--width", "8", "--samples", "2", "--seed", "5", "--out", p.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("k.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["command"], "ntk");
    assert_eq!(m["tool"], "pruned-ntk");
    assert!(m["started_at"].as_str().unwrap() <= m["finished_at"].as_str().unwrap());
}

/// Ten points on the unit circle-ish with distinct directions, and targets.
fn write_train(path: &Path, n: usize) -> Vec<(Vec<f64>, f64)> {
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let t = 0.37 * i as f64 + 0.1;
            (vec![t.cos(), t.sin(), 0.3 * (2.0 * t).cos()], (3.0 * t).sin())
        })
        .collect();
    let mut text = String::from("x0,x1,x2,y\n");
    for (x, y) in &rows {
        text.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], y));
    }
    fs::write(path, text).unwrap();
    rows
}

fn write_test(path: &Path, xs: &[Vec<f64>]) {
    let text: String = xs.iter().map(|x| format!("{},{},{}\n", x[0], x[1], x[2])).collect();
    fs::write(path, text).unwrap();
}

fn predictions(out: &Output) -> Vec<f64> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn regression_interpolates_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    let rows = write_train(&train, 10);
    write_test(&test, &rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
    let args = ["regress", "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap()];
    let pred = predictions(&run(&args));
    assert_eq!(pred.len(), 10);
    for (p, (_, y)) in pred.iter().zip(&rows) {
        assert!((p - y).abs() < 1e-8, "{p} vs {y}");
    }
}

#[test]
fn regression_ignores_kernel_scale() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    write_train(&train, 10);
    write_test(&test, &[vec![0.2, -0.4, 0.9], vec![1.0, 1.0, 0.0], vec![-0.3, 0.1, 0.2]]);
    let args = ["regress", "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap()];
    let plain = predictions(&run(&args));
    let scaled = predictions(&run(&[&args[..], &["--kernel-scale", "0.125"]].concat()));
    for (a, b) in plain.iter().zip(&scaled) {
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn empty_test_file_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    write_train(&train, 4);
    fs::write(&test, "").unwrap();
    let out = run(&["regress", "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn singular_gram_needs_jitter() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    fs::write(&train, "1,0,1\n1,0,2\n0,1,3\n").unwrap();
    fs::write(&test, "1,0\n").unwrap();
    let args = ["regress", "--train", train.to_str().unwrap(), "--test", test.to_str().unwrap()];
    assert_eq!(code(&run(&args)), 3);
    let pred = predictions(&run(&[&args[..], &["--jitter", "1e-6"]].concat()));
    assert!((pred[0] - 1.5).abs() < 1e-3);
}

#[test]
fn regression_output_file_records_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, out) = (dir.path().join("train.csv"), dir.path().join("test.csv"), dir.path().join("p.csv"));
    write_train(&train, 5);
    write_test(&test, &[vec![0.5, 0.5, 0.5]]);
    let status = run(&[
        "regress",
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("p.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert!(m["seed"].is_null());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
}
