//! End-to-end tests of the `kaczpp` binary: flag validation, exit codes,
//! JSON summaries, trace emission, benchmark CSV shape and determinism.

use kaczpp::linalg::Matrix;
use kaczpp::problems::{
    load_problem, save_problem, standard_normal_vector, LinearProblem, ProblemKind,
    ProblemMetadata,
};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kaczpp"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

#[test]
fn generate_lowrank_reloads_with_expected_spectrum() {
    let dir = tmp("gen_lowrank");
    let out_path = dir.join("lr.bin");
    let out = bin()
        .args(["generate", "--kind", "lowrank", "--m", "96", "--n", "48"])
        .args(["--effective-rank", "8", "--tail-strength", "0.05"])
        .args(["--seed", "7", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["rows"], 96);
    assert_eq!(summary["cols"], 48);
    assert_eq!(summary["kind"], "general");
    assert!(summary["kappa_bar"].as_array().unwrap().len() >= 3);

    let problem = load_problem(&out_path).unwrap();
    assert_eq!(problem.kind, ProblemKind::General);
    let sigma = kaczpp::linalg::svd(&problem.a).unwrap().sigma;
    // bell-shaped profile: top singular value ~1, decayed well below 1 by 4x
    // the effective rank
    assert!((sigma[0] - 1.0).abs() < 0.05, "sigma0 = {}", sigma[0]);
    assert!(sigma[32] < 0.1, "sigma32 = {}", sigma[32]);
    // planted solution is consistent
    let x = problem.x_star.as_ref().unwrap();
    let r = problem.a.matvec(x).unwrap().sub(&problem.b).norm();
    assert!(r < 1e-12);
}

#[test]
fn generate_kernel_from_csv_is_symmetric_psd() {
    let dir = tmp("gen_kernel_csv");
    let csv_path = dir.join("points.csv");
    let mut rows = String::from("x,y\n");
    for i in 0..40 {
        rows.push_str(&format!("{}.5,{}\n", i, (i * 7) % 11));
    }
    std::fs::write(&csv_path, rows).unwrap();
    let out_path = dir.join("kern.bin");
    let out = bin()
        .args(["generate", "--kind", "kernel", "--kernel", "laplacian"])
        .args(["--gamma", "0.1", "--phi", "0.001", "--seed", "2", "--csv"])
        .arg(&csv_path)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let problem = load_problem(&out_path).unwrap();
    assert_eq!(problem.kind, ProblemKind::Psd);
    assert_eq!(problem.a.rows(), 40);
    assert!(problem.a.asymmetry() < 1e-12);
    assert_eq!(problem.phi, 0.001);
    let eig = kaczpp::linalg::sym_eig(&problem.a).unwrap();
    assert!(eig.lambda.last().copied().unwrap() > 0.0);
}

#[test]
fn generate_missing_out_is_usage_error() {
    let out = bin().args(["generate", "--kind", "lowrank"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_kernel_flags_on_lowrank_is_usage_error() {
    let dir = tmp("gen_conflict");
    let out = bin()
        .args(["generate", "--kind", "lowrank", "--gamma", "0.5", "--out"])
        .arg(dir.join("x.bin"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--kind kernel"));
}

#[test]
fn solve_kzpp_converges_and_writes_trace() {
    let dir = tmp("solve_kzpp");
    let problem_path = dir.join("lr.bin");
    let status = bin()
        .args(["generate", "--kind", "lowrank", "--m", "96", "--n", "48"])
        .args(["--effective-rank", "8", "--seed", "3", "--out"])
        .arg(&problem_path)
        .status()
        .unwrap();
    assert!(status.success());

    let trace_path = dir.join("trace.json");
    let out = bin()
        .args(["solve", "--solver", "kzpp", "--block-size", "24"])
        .args(["--eps", "1e-8", "--max-iters", "2000", "--problem"])
        .arg(&problem_path)
        .arg("--trace")
        .arg(&trace_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "converged");
    assert!(summary["iterations"].as_u64().unwrap() > 0);
    assert!(summary["headline_flops"].as_u64().unwrap() > 0);
    assert!(summary["final_true_residual"].as_f64().unwrap() < 1e-7);

    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(trace["status"], "Converged");
    assert!(!trace["records"].as_array().unwrap().is_empty());
}

#[test]
fn solve_cdpp_on_general_problem_is_usage_error() {
    let dir = tmp("solve_mismatch");
    let problem_path = dir.join("lr.bin");
    let status = bin()
        .args(["generate", "--kind", "lowrank", "--m", "64", "--n", "32"])
        .args(["--effective-rank", "8", "--out"])
        .arg(&problem_path)
        .status()
        .unwrap();
    assert!(status.success());
    let out = bin()
        .args(["solve", "--solver", "cdpp", "--problem"])
        .arg(&problem_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind mismatch"));
}

#[test]
fn solve_identity_system_converges_immediately() {
    let dir = tmp("solve_identity");
    let n = 32usize;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0;
    }
    let b = standard_normal_vector(n, 9);
    let problem = LinearProblem::new(
        ProblemKind::Psd,
        a,
        b,
        None,
        1.0,
        ProblemMetadata::new("identity", "n=32", 9),
    )
    .unwrap();
    let path = dir.join("id.bin");
    save_problem(&path, &problem).unwrap();

    let out = bin()
        .args(["solve", "--solver", "cdpp", "--block-size", "32"])
        .args(["--eps", "1e-8", "--problem"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["status"], "converged");
    assert!(summary["iterations"].as_u64().unwrap() <= 2);
}

#[test]
fn bench_writes_deterministic_csv_with_sentinel() {
    let dir = tmp("bench");
    let manifest = serde_json::json!({
        "output": "results.csv",
        "thresholds": [1e-4, 1e-6],
        "cells": [
            {
                "dataset": "synth",
                "problem": { "kind": "kernel", "points": 96, "dim": 1,
                             "kernel": "gaussian", "gamma": 0.1, "phi": 0.001, "seed": 5 },
                "solver": { "name": "cdpp", "block_size": 24, "max_iters": 20000 },
                "seeds": [0, 1, 2]
            },
            {
                "dataset": "synth",
                "problem": { "kind": "kernel", "points": 96, "dim": 1,
                             "kernel": "gaussian", "gamma": 0.1, "phi": 0.001, "seed": 5 },
                "solver": { "name": "gmres" },
                "seeds": [0]
            },
            {
                "dataset": "starved",
                "problem": { "kind": "lowrank", "m": 96, "n": 48, "seed": 1 },
                "solver": { "name": "kzpp", "block_size": 24, "max_iters": 3 },
                "seeds": [0]
            }
        ]
    });
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();

    let run = || {
        let out = bin()
            .arg("bench")
            .arg("--manifest")
            .arg(&manifest_path)
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join("results.csv")).unwrap()
    };
    let first = run();
    let text = String::from_utf8(first.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dataset,kernel,width,solver,threshold,flops");
    // 3 cells x 2 thresholds
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("synth,gaussian,0.1,cdpp,1e-4,"));
    // the starved cell cannot reach any threshold in 3 iterations
    assert!(lines[5].ends_with(",∞") && lines[6].ends_with(",∞"));
    // converged cells carry finite FLOP counts
    let cdpp_flops: u64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!(cdpp_flops > 0);

    let second = run();
    assert_eq!(first, second, "re-run must be byte-identical");
}

#[test]
fn bench_rejects_ascending_thresholds() {
    let dir = tmp("bench_bad");
    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        r#"{ "output": "r.csv", "thresholds": [1e-6, 1e-4],
             "cells": [ { "dataset": "d",
                          "problem": { "kind": "lowrank", "m": 16, "n": 8 },
                          "solver": { "name": "kzpp" }, "seeds": [0] } ] }"#,
    )
    .unwrap();
    let out = bin()
        .arg("bench")
        .arg("--manifest")
        .arg(&manifest_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("descending"));
}

#[test]
fn verify_suites_pass_and_report_json() {
    for suite in ["transforms", "dpp", "reduction"] {
        let out = bin().args(["verify", "--suite", suite]).output().unwrap();
        assert!(
            out.status.success(),
            "suite {suite}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let report = stdout_json(&out);
        assert_eq!(report["suite"], suite);
        assert_eq!(report["pass"], true);
        assert!(!report["checks"].as_array().unwrap().is_empty());
    }
}

#[test]
fn verify_unknown_suite_is_usage_error() {
    let out = bin().args(["verify", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
