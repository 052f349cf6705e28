use std::path::Path;
use std::process::{Command, Output};

fn hbtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbtlab")).args(args).output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let defaults = String::from_utf8(hbtlab(&["report", "--defaults"]).stdout).unwrap();
    let text = defaults
        .replace("duration_s = 200.0", "duration_s = 0.02")
        .replace("segments = 200", "segments = 2")
        .replace("duration_s = 20.0", "duration_s = 0.5")
        .replace("scan_range_mm = 30.0", "scan_range_mm = 0.2");
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn selftest_exits_zero() {
    let out = hbtlab(&["selftest"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("12/12 checks passed"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[optics]", "[optics]\nbogus_key = 3");
    std::fs::write(&cfg, text).unwrap();
    let out = hbtlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(hbtlab(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(hbtlab(&["report"]).status.code(), Some(1));
    assert_eq!(hbtlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let out = hbtlab(&["compare", "--histogram", "/nonexistent/h.csv", "--prediction", "/nonexistent/p.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = hbtlab(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(out_dir.join("histogram.csv")).unwrap(), std::fs::read(out_dir.join("tags_0000.hbtt")).unwrap())
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let out = hbtlab(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--segments",
            "5",
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        outputs.push(std::fs::read_to_string(out_dir.join("report.txt")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn correlate_then_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let d = dir.path().to_str().unwrap();
    assert!(hbtlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d]).status.success());
    let corr = dir.path().join("corr");
    let tags = dir.path().join("tags_0000.hbtt");
    let out = hbtlab(&[
        "correlate",
        "--a",
        tags.to_str().unwrap(),
        "--center-ps",
        "500000",
        "--max-lag-ns",
        "20",
        "--plateau-ns",
        "5,20",
        "--out",
        corr.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("center_residual_ps = -22.600"));
    let pred = dir.path().join("prediction.csv");
    let out = hbtlab(&[
        "compare",
        "--histogram",
        corr.join("histogram.csv").to_str().unwrap(),
        "--prediction",
        pred.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("predicted_height"));
}
