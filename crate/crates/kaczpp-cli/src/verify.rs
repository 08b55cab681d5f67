//! `kaczpp verify`: run one of the oracle suites on small deterministic
//! instances and print a JSON report. Exit code is nonzero if any check fails.

use crate::CmdError;
use clap::{Args, ValueEnum};
use kaczpp::cdpp::cdpp_kzpp_reduction_check;
use kaczpp::linalg::{svd, Matrix, Transpose, Vector};
use kaczpp::oracles::{
    block_memo_check, dpp_enumerate, dpp_expected_size_formula, expected_projection, lambda_bar,
    mu_nu_rho, rate_bound_check, rdpp_inequality_check, EnsembleMode, OracleCheck,
};
use kaczpp::problems::standard_normal_vector;
use kaczpp::transforms::{fht, fht_matrix, sym_fht};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Symmetric fast transform equivalence and operation-count bounds.
    Transforms,
    /// Convergence-rate bound and second-moment parameter bounds.
    Rates,
    /// Averaged block projections dominate half the expected projection.
    Memoization,
    /// Determinantal expected-size identity and PSD inequality.
    Dpp,
    /// Coordinate-descent / row-projection trajectory equivalence.
    Reduction,
    All,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
}

pub fn run(args: &VerifyArgs) -> Result<(), CmdError> {
    let mut checks = Vec::new();
    let mut push = |mut list: Vec<OracleCheck>| checks.append(&mut list);
    match args.suite {
        Suite::Transforms => push(transforms_suite()?),
        Suite::Rates => push(rates_suite()?),
        Suite::Memoization => push(memoization_suite()?),
        Suite::Dpp => push(dpp_suite()?),
        Suite::Reduction => push(reduction_suite()?),
        Suite::All => {
            push(transforms_suite()?);
            push(rates_suite()?);
            push(memoization_suite()?);
            push(dpp_suite()?);
            push(reduction_suite()?);
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = serde_json::json!({
        "suite": match args.suite {
            Suite::Transforms => "transforms",
            Suite::Rates => "rates",
            Suite::Memoization => "memoization",
            Suite::Dpp => "dpp",
            Suite::Reduction => "reduction",
            Suite::All => "all",
        },
        "checks": checks,
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    if pass {
        Ok(())
    } else {
        Err(CmdError::numerical("one or more verification checks failed"))
    }
}

fn random_matrix(m: usize, n: usize, seed: u64) -> Matrix {
    let flat = standard_normal_vector(m * n, seed);
    Matrix::from_vec(m, n, flat.as_slice().to_vec())
}

fn random_symmetric(n: usize, seed: u64) -> Matrix {
    let w = random_matrix(n, n, seed);
    let mut a = w.transpose();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (a[(i, j)] + w[(i, j)]);
        }
    }
    a
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

fn oracle_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::numerical(format!("{e}"))
}

fn transforms_suite() -> Result<Vec<OracleCheck>, CmdError> {
    let mut checks = Vec::new();
    for n in [64usize, 256] {
        let a = random_symmetric(n, 20 + n as u64);
        let (fast, ops) = sym_fht(&a).map_err(oracle_err)?;
        let (once, _) = fht_matrix(&a).map_err(oracle_err)?;
        let (reference, _) = fht_matrix(&once.transpose()).map_err(oracle_err)?;
        checks.push(OracleCheck::le(
            &format!("sym_fht_matches_double_sided_n{n}"),
            max_abs_diff(&fast, &reference),
            1e-11,
        ));
        let bound = (n * n) as f64 * (2.5 + (n as f64).log2());
        checks.push(OracleCheck::le(
            &format!("sym_fht_op_count_n{n}"),
            ops as f64,
            bound,
        ));
        // the transform is an involution up to the factor n
        let v = standard_normal_vector(n, 30 + n as u64);
        let (f1, _) = fht(&v).map_err(oracle_err)?;
        let (f2, _) = fht(&f1).map_err(oracle_err)?;
        let mut worst = 0.0f64;
        for i in 0..n {
            worst = worst.max((f2[i] - n as f64 * v[i]).abs());
        }
        checks.push(OracleCheck::le(
            &format!("fht_involution_n{n}"),
            worst / n as f64,
            1e-10,
        ));
    }
    Ok(checks)
}

fn rates_suite() -> Result<Vec<OracleCheck>, CmdError> {
    let (m, n, s) = (10usize, 6usize, 3usize);
    let a = random_matrix(m, n, 40);
    let x_plant = standard_normal_vector(n, 41);
    let b = a.matvec(&x_plant).map_err(oracle_err)?;
    let sigma = svd(&a).map_err(oracle_err)?.sigma;
    let lam = lambda_bar(&sigma, s) * s as f64 / m as f64;
    let mut checks = Vec::new();

    let ensemble = expected_projection(&a, s, lam, EnsembleMode::Exhaustive).map_err(oracle_err)?;
    let rate = mu_nu_rho(&ensemble).map_err(oracle_err)?;
    checks.push(OracleCheck::ge("nu_at_least_one", rate.nu, 1.0 - 1e-9));
    checks.push(OracleCheck::le(
        "nu_at_most_inverse_mu",
        rate.nu,
        1.0 / rate.mu + 1e-9,
    ));

    let report = rate_bound_check(&a, &b, s, lam, 100, &[10, 40], 42).map_err(oracle_err)?;
    checks.push(OracleCheck::le(
        "mean_error_within_rate_bound",
        report.max_ratio,
        1.2,
    ));
    Ok(checks)
}

fn memoization_suite() -> Result<Vec<OracleCheck>, CmdError> {
    let (m, s) = (8usize, 2usize);
    let b_blocks = (8.0 * (m as f64 / s as f64) * (m as f64).ln()).ceil() as usize;
    let mut checks = Vec::new();
    for seed in 0..2u64 {
        let a = random_matrix(m, 6, 50 + seed);
        let sigma = svd(&a).map_err(oracle_err)?.sigma;
        let lam = lambda_bar(&sigma, s) * s as f64 / m as f64;
        let rate = block_memo_check(&a, s, lam, b_blocks, 100, 51 + seed).map_err(oracle_err)?;
        checks.push(OracleCheck::ge(
            &format!("block_average_dominates_half_mean_seed{seed}"),
            rate,
            0.95,
        ));
    }
    Ok(checks)
}

fn dpp_suite() -> Result<Vec<OracleCheck>, CmdError> {
    let mut checks = Vec::new();
    for seed in 0..3u64 {
        let g = random_matrix(6, 6, 60 + seed);
        let mut l = Matrix::gemm(&g, Transpose::Yes, &g, Transpose::No).map_err(oracle_err)?;
        l.scale(0.3);
        let d = dpp_enumerate(&l).map_err(oracle_err)?;
        let formula = dpp_expected_size_formula(&l).map_err(oracle_err)?;
        checks.push(OracleCheck::le(
            &format!("expected_size_identity_seed{seed}"),
            (d.expected_size - formula).abs(),
            1e-10,
        ));
    }
    for seed in 0..3u64 {
        let a = random_matrix(6, 4, 70 + seed);
        let k = 1 + (seed as usize % 2);
        let min_ev = rdpp_inequality_check(&a, k).map_err(oracle_err)?;
        checks.push(OracleCheck::ge(
            &format!("psd_inequality_seed{seed}_k{k}"),
            min_ev,
            -1e-9,
        ));
    }
    Ok(checks)
}

fn reduction_suite() -> Result<Vec<OracleCheck>, CmdError> {
    let n = 32usize;
    let d = 24usize;
    let phi = random_matrix(n, d, 80);
    let z_plant = standard_normal_vector(d, 81);
    let b: Vector = phi.matvec(&z_plant).map_err(oracle_err)?;
    let dev = cdpp_kzpp_reduction_check(&phi, &b, 8, 1e-8, 0.2, 0.1, 50, 82).map_err(oracle_err)?;
    Ok(vec![OracleCheck::le(
        "trajectory_deviation_50_iterations",
        dev,
        1e-9,
    )])
}
