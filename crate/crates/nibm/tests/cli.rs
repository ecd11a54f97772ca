use std::process::{Command, Output};

use clap::Parser;
use nibm::cli::{Args, RunConfig, VERSION};
use serde_json::Value;

fn nibm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nibm")).args(args).env_remove("NIBM_THREADS").output().unwrap()
}

fn csv_rows(out: &Output) -> Vec<Vec<f64>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn single_bridge_cdf_row() {
    let out = nibm(&["max-cdf", "--model", "bb", "--n", "1", "--m-grid", "0.2:3.0:0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 29);
    let row = rows.iter().find(|r| (r[0] - 1.0).abs() < 1e-12).unwrap();
    assert!((row[1] - (1.0 - (-2f64).exp())).abs() < 1e-9);
}

#[test]
fn contour_grid_peaks_on_the_midline() {
    let out = nibm(&[
        "joint-density",
        "--model",
        "bb",
        "--n",
        "6",
        "--m-grid",
        "auto",
        "--t-grid",
        "0.05:0.95:0.01",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let js: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(js["meta"]["N"], 6);
    assert_eq!(js["meta"]["model"], "bb");
    let data = js["data"].as_array().unwrap();
    assert_eq!(data.len() % 91, 0);
    let f = |i: usize| data[i]["density"].as_f64().unwrap();
    let best = (0..data.len()).max_by(|&a, &b| f(a).total_cmp(&f(b))).unwrap();
    assert!((data[best]["t"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    // deep in the lower tail values sit near the rounding floor of the
    // operator, so relative agreement is asked for above that floor
    let floor = 1e-14 * f(best);
    for row in data.chunks(91) {
        for j in 0..91 {
            let (a, b) = (row[j]["density"].as_f64().unwrap(), row[90 - j]["density"].as_f64().unwrap());
            assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + floor, "{a} {b}");
        }
    }
}

#[test]
fn quick_validation_passes() {
    let out = nibm(&["validate", "--suite", "quick", "--seed", "7", "--format", "json"]);
    let js: Value = serde_json::from_slice(&out.stdout).unwrap();
    let data = js["data"].as_array().unwrap();
    assert!(data.len() > 10);
    let failed: Vec<_> = data.iter().filter(|r| r["passed"] != true).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn auto_height_window() {
    let cfg = RunConfig::new(Args::parse_from(["nibm", "max-cdf", "--n", "6"])).unwrap();
    let g = cfg.m_grid().unwrap();
    let half = 6.0 * 6f64.powf(-1.0 / 6.0);
    let (lo, step) = (6f64.sqrt() - half, half / 50.0);
    // the window reaches below zero; only positive heights are kept
    let kept: Vec<f64> = (0..=100).map(|k| lo + k as f64 * step).filter(|&m| m > 0.0).collect();
    assert_eq!(g.len(), kept.len());
    assert!(g.iter().zip(&kept).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!((g[g.len() - 1] - (6f64.sqrt() + half)).abs() < 1e-12);
}

#[test]
fn header_echo_round_trips() {
    let out = nibm(&["argmax-marginal", "--n", "2", "--t-grid", "0.1:0.9:0.2", "--seed", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    let prefix = format!("# nibm {VERSION} ");
    let echoed = header.strip_prefix(&prefix).unwrap();
    let argv: Vec<&str> = std::iter::once("nibm").chain(echoed.split(' ')).collect();
    let cfg = RunConfig::new(Args::parse_from(argv)).unwrap();
    assert_eq!(format!("# {}", cfg.echo()), header);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let p = path.to_str().unwrap();
        let out = nibm(&[
            "simulate",
            "--sampler",
            "dyson",
            "--n",
            "3",
            "--horizon",
            "1",
            "--ds",
            "0.125",
            "--mc-samples",
            "2500",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out",
            p,
        ]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("3", "b.csv"));
}

#[test]
fn exit_codes() {
    assert_eq!(nibm(&["max-cdf", "--tol", "1"]).status.code(), Some(2));
    assert_eq!(nibm(&["max-cdf", "--m-grid", "1:1:0.1"]).status.code(), Some(2));
    assert_eq!(nibm(&["max-cdf", "--n", "100000"]).status.code(), Some(2));
    assert_eq!(nibm(&["frobnicate"]).status.code(), Some(2));
    let env = Command::new(env!("CARGO_BIN_EXE_nibm"))
        .args(["max-cdf", "--n", "1"])
        .env("NIBM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(2));
    let bad = nibm(&["simulate", "--sampler", "bridge", "--n", "1", "--grid-pow", "20", "--mc-samples", "10"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn numerical_failure_names_parameters_and_leaves_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tw.csv");
    let out = nibm(&["tw-goe", "--m-grid", "-14:-12:1", "--quad-order", "4", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m=-"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn flag_overrides_thread_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_nibm"))
        .args(["max-cdf", "--n", "1", "--m-grid", "0.5:1:0.5", "--threads", "2"])
        .env("NIBM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
