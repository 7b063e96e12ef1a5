//! End-to-end checks of the `ubsr` binary: exit codes, file outputs, and
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ubsr"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ubsr-cli-test-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout should be JSON")
}

#[test]
fn estimate_matches_closed_form() {
    let dir = workdir("estimate");
    let samples = dir.join("samples.csv");
    write(&samples, "value\n1\n1\n1\n");
    let out = run_ok(bin().args([
        "estimate",
        "--loss",
        "exp",
        "--beta",
        "2",
        "--lambda",
        "1",
        "--input",
        samples.to_str().unwrap(),
    ]));
    let v = json_of(&out);
    assert_eq!(v["schema_version"], 1);
    let t = v["t"].as_f64().unwrap();
    assert!((t - (-1.0)).abs() < 1e-9, "t={t}");
}

#[test]
fn estimate_rejects_bad_lambda_with_usage_code() {
    let dir = workdir("estimate-bad");
    let samples = dir.join("samples.csv");
    write(&samples, "0.1\n0.2\n");
    let out = bin()
        .args([
            "estimate",
            "--loss",
            "exp",
            "--beta",
            "1",
            "--lambda",
            "0",
            "--input",
            samples.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_missing_file_is_io_error() {
    let out = bin()
        .args([
            "estimate",
            "--loss",
            "exp",
            "--beta",
            "1",
            "--lambda",
            "1",
            "--input",
            "/nonexistent/samples.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn project_all_solvers_agree_on_scalar_instance() {
    let dir = workdir("project");
    let input = dir.join("x.csv");
    write(&input, "x\n1\n");
    for solver in ["dirssn", "sepssn", "bisect", "ipm"] {
        let out_path = dir.join(format!("{solver}.json"));
        run_ok(bin().args([
            "project",
            "--solver",
            solver,
            "--loss",
            "poly",
            "--eta",
            "2",
            "--lambda",
            "0.125",
            "--input",
            input.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]));
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
        assert_eq!(v["solver"], solver);
        assert!(v["kkt_residual"].as_f64().unwrap() <= 1e-8);
        let u = v["u"][0].as_f64().unwrap();
        assert!((u - 0.5).abs() < 1e-6, "{solver}: u={u}");
    }
}

#[test]
fn project_large_vector_goes_to_side_csv() {
    let dir = workdir("project-large");
    let input = dir.join("x.csv");
    let mut text = String::from("x\n");
    for i in 0..1500 {
        text.push_str(&format!("{}\n", (i % 7) as f64 / 3.0));
    }
    write(&input, &text);
    let out_path = dir.join("result.json");
    run_ok(bin().args([
        "project",
        "--solver",
        "sepssn",
        "--loss",
        "poly",
        "--eta",
        "2",
        "--lambda",
        "0.05",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(v["u"].is_null());
    let u_path = v["u_path"].as_str().unwrap();
    let u_text = std::fs::read_to_string(u_path).unwrap();
    assert_eq!(u_text.lines().count(), 1501); // header + 1500 values
}

#[test]
fn gen_data_is_seed_deterministic() {
    let dir = workdir("gendata");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    let c = dir.join("c.csv");
    run_ok(bin().args([
        "gen-data",
        "--n",
        "3",
        "--m",
        "20",
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "gen-data",
        "--n",
        "3",
        "--m",
        "20",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]));
    run_ok(bin().args([
        "gen-data",
        "--n",
        "3",
        "--m",
        "20",
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]));
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    assert_ne!(bytes_a, std::fs::read(&c).unwrap());
    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with("asset_1,asset_2,asset_3\n"));
    assert_eq!(text.lines().count(), 21);
}

fn optimize_config(dir: &Path, input: &Path) -> PathBuf {
    let cfg = dir.join("cfg.toml");
    write(
        &cfg,
        &format!(
            r#"
[loss]
kind = "exp"
beta = 1.0

[optimize]
lambda = 0.5
alpha = 0.3
r0 = "auto"
input = "{}"

[admm]
sigma0 = 1e-3
tau = 2.0
"#,
            input.display()
        ),
    );
    cfg
}

#[test]
fn optimize_end_to_end_and_reproducible() {
    let dir = workdir("optimize");
    let returns = dir.join("returns.csv");
    run_ok(bin().args([
        "gen-data",
        "--n",
        "3",
        "--m",
        "60",
        "--seed",
        "3",
        "--out",
        returns.to_str().unwrap(),
    ]));
    let cfg = optimize_config(&dir, &returns);

    let report1 = dir.join("r1.json");
    let report2 = dir.join("r2.json");
    let w1 = dir.join("w1.csv");
    let w2 = dir.join("w2.csv");
    for (report, weights) in [(&report1, &w1), (&report2, &w2)] {
        run_ok(bin().args([
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            "--weights",
            weights.to_str().unwrap(),
        ]));
    }
    let mut v1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report1).unwrap()).unwrap();
    let mut v2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report2).unwrap()).unwrap();
    assert_eq!(v1["converged"], true);
    assert!(v1["violation"].as_f64().unwrap() <= 1e-5);
    // Identical runs are byte-identical modulo wall-clock fields.
    for v in [&mut v1, &mut v2] {
        v.as_object_mut().unwrap().remove("wall_time");
        v.as_object_mut().unwrap().remove("weights_path");
    }
    assert_eq!(v1, v2);
    let weights_text = std::fs::read_to_string(&w1).unwrap();
    assert_eq!(weights_text, std::fs::read_to_string(&w2).unwrap());
    let sum: f64 = weights_text
        .lines()
        .skip(1)
        .map(|l| l.parse::<f64>().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn optimize_rejects_unknown_config_keys() {
    let dir = workdir("optimize-badcfg");
    let cfg = dir.join("cfg.toml");
    write(
        &cfg,
        r#"
[loss]
kind = "exp"
beta = 1.0

[optimize]
lambda = 0.5
turbo = true
"#,
    );
    let out = bin()
        .args(["optimize", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_missing_input_is_io_error() {
    let dir = workdir("optimize-noinput");
    let cfg = optimize_config(&dir, Path::new("/nonexistent/returns.csv"));
    let out = bin()
        .args(["optimize", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn backtest_end_to_end() {
    let dir = workdir("backtest");
    let returns = dir.join("returns.csv");
    run_ok(bin().args([
        "gen-data",
        "--n",
        "3",
        "--m",
        "50",
        "--seed",
        "5",
        "--out",
        returns.to_str().unwrap(),
    ]));
    let cfg = dir.join("cfg.toml");
    write(
        &cfg,
        r#"
[loss]
kind = "exp"
beta = 1.0

[backtest]
lambda = 0.5
alpha = 0.3
window = 30
r0_rule = "one_over_n"

[admm]
sigma0 = 1e-3
tau = 2.0
"#,
    );
    let report = dir.join("report.json");
    let series = dir.join("series.csv");
    run_ok(bin().args([
        "backtest",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        returns.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--series",
        series.to_str().unwrap(),
    ]));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["strategy"]["days"], 20);
    assert_eq!(v["strategy"]["failures"], 0);
    assert!(v["equal_weight"]["mean_return"].is_number());
    let series_text = std::fs::read_to_string(&series).unwrap();
    assert_eq!(series_text.lines().count(), 21); // header + 20 days
}

#[test]
fn bench_projection_empty_solver_list_is_usage_error() {
    let dir = workdir("bench-usage");
    let out = bin()
        .args([
            "bench",
            "projection",
            "--dims",
            "1",
            "--solvers",
            "",
            "--losses",
            "exp:0.5",
            "--lambdas",
            "0.1",
            "--out",
            dir.join("b.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_projection_small_grid() {
    let dir = workdir("bench-small");
    let out_path = dir.join("bench.csv");
    run_ok(bin().args([
        "bench",
        "projection",
        "--dims",
        "1,16",
        "--solvers",
        "sepssn,bisect",
        "--losses",
        "exp:0.5,poly:2",
        "--lambdas",
        "0.1",
        "--repeats",
        "2",
        "--seed",
        "11",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // header + 2 dims x 2 solvers x 2 losses x 1 lambda x 2 repeats
    assert_eq!(lines.len(), 1 + 16);
    assert!(lines[0].starts_with("m,solver,loss,lambda,rep,wall_time,kkt_residual"));
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let kkt = fields[6].parse::<f64>().unwrap();
        assert!(kkt <= 1e-8, "row {line}");
    }
}

#[test]
fn bench_optimize_small_grid() {
    let dir = workdir("bench-opt");
    let out_path = dir.join("bench.csv");
    run_ok(bin().args([
        "bench",
        "optimize",
        "--ms",
        "30",
        "--ns",
        "2,3",
        "--losses",
        "exp:1",
        "--lambdas",
        "0.5",
        "--alphas",
        "0,0.5",
        "--repeats",
        "2",
        "--seed",
        "4",
        "--sigma0",
        "1e-3",
        "--tau",
        "2.0",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4); // header + 1x2x1x1x2 cells
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[5], "2"); // repeats
        let max_violation = fields[8].parse::<f64>().unwrap();
        assert!(max_violation <= 1e-5, "row {line}");
        assert_eq!(fields[9], "2"); // converged runs
    }
}
