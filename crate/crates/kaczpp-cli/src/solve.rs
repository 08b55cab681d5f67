//! `kaczpp solve`: run one solver on a problem file, optionally write the
//! convergence trace, and print a JSON summary.

use crate::CmdError;
use clap::{Args, ValueEnum};
use kaczpp::baselines::{cg_solve, gmres_solve, BaselineError, KrylovConfig};
use kaczpp::cdpp;
use kaczpp::kaczmarz::{self, SolverConfig, SolverError};
use kaczpp::linalg::Vector;
use kaczpp::metering::{ConvergenceTrace, SolveStatus};
use kaczpp::problems::{load_problem, LinearProblem, ProblemKind};
use std::path::PathBuf;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    /// Accelerated randomized block row projection (general systems).
    Kzpp,
    /// Accelerated randomized block coordinate descent (positive definite).
    Cdpp,
    /// Conjugate gradient baseline (positive definite).
    Cg,
    /// GMRES baseline (square systems).
    Gmres,
}

impl SolverArg {
    pub fn label(self) -> &'static str {
        match self {
            SolverArg::Kzpp => "kzpp",
            SolverArg::Cdpp => "cdpp",
            SolverArg::Cg => "cg",
            SolverArg::Gmres => "gmres",
        }
    }
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem file written by `kaczpp generate`.
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, value_enum)]
    pub solver: SolverArg,
    #[arg(long, default_value_t = 64)]
    pub block_size: usize,
    /// Block regularizer added to the projection subproblems.
    #[arg(long, default_value_t = 1e-8)]
    pub lambda: f64,
    /// Inner least-squares iterations per projection.
    #[arg(long, default_value_t = 8)]
    pub tmax: usize,
    /// Sketch width as a multiple of the block size.
    #[arg(long, default_value_t = 2)]
    pub tau_factor: usize,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the randomized Hadamard preprocessing.
    #[arg(long)]
    pub no_rht: bool,
    /// Disable block preconditioner memoization.
    #[arg(long)]
    pub no_memo: bool,
    /// Disable the momentum acceleration.
    #[arg(long)]
    pub no_accel: bool,
    /// Write the full convergence trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Record the true residual every k iterations (0 = never).
    #[arg(long, default_value_t = 0)]
    pub true_residual_every: usize,
}

pub struct RunOutcome {
    pub trace: ConvergenceTrace,
    pub headline_flops: u64,
    pub x: Vector,
}

pub fn run(args: &SolveArgs) -> Result<(), CmdError> {
    let problem = load_problem(&args.problem)
        .map_err(|e| CmdError::usage(format!("reading {}: {e}", args.problem.display())))?;
    let outcome = run_solver(&problem, args)?;

    if let Some(path) = &args.trace {
        let json = serde_json::to_string_pretty(&outcome.trace).unwrap();
        std::fs::write(path, json)
            .map_err(|e| CmdError::numerical(format!("writing {}: {e}", path.display())))?;
    }

    let last = outcome.trace.records.last();
    let residual = true_relative_residual(&problem, &outcome.x);
    let summary = serde_json::json!({
        "solver": args.solver.label(),
        "status": match outcome.trace.status {
            SolveStatus::Converged => "converged",
            SolveStatus::Budget => "budget",
            SolveStatus::Error => "error",
        },
        "iterations": last.map(|r| r.iteration).unwrap_or(0),
        "headline_flops": outcome.headline_flops,
        "final_residual_estimate": last.map(|r| r.residual_estimate),
        "final_true_residual": residual,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());

    match outcome.trace.status {
        SolveStatus::Converged => Ok(()),
        SolveStatus::Budget => Err(CmdError::numerical(
            "iteration budget exhausted before the tolerance was reached",
        )),
        SolveStatus::Error => Err(CmdError::numerical("solver reported a numerical error")),
    }
}

/// Dispatch to the configured solver. Kind mismatches are usage errors;
/// divergence and non-finite iterates are numerical errors.
pub fn run_solver(problem: &LinearProblem, args: &SolveArgs) -> Result<RunOutcome, CmdError> {
    match args.solver {
        SolverArg::Kzpp | SolverArg::Cdpp => {
            let config = solver_config(args);
            let result = match args.solver {
                SolverArg::Kzpp => kaczmarz::solve(problem, &config),
                _ => cdpp::solve_psd(problem, &config),
            };
            let out = result.map_err(map_solver_error)?;
            Ok(RunOutcome {
                headline_flops: out.meter.headline(),
                trace: out.trace,
                x: out.x,
            })
        }
        SolverArg::Cg => {
            if problem.kind != ProblemKind::Psd {
                return Err(CmdError::usage(
                    "cg expects a positive definite problem; use kzpp for general systems",
                ));
            }
            let (x, trace) = cg_solve(&problem.a, &problem.b, &krylov_config(args))
                .map_err(map_baseline_error)?;
            Ok(finish_baseline(x, trace))
        }
        SolverArg::Gmres => {
            let (x, trace) = gmres_solve(&problem.a, &problem.b, &krylov_config(args))
                .map_err(map_baseline_error)?;
            Ok(finish_baseline(x, trace))
        }
    }
}

fn solver_config(args: &SolveArgs) -> SolverConfig {
    SolverConfig {
        block_size: args.block_size,
        lambda: args.lambda,
        t_max: args.tmax,
        tau_factor: args.tau_factor,
        tolerance: args.eps,
        max_iterations: args.max_iters,
        seed: args.seed,
        use_rht: !args.no_rht,
        use_memoization: !args.no_memo,
        use_acceleration: !args.no_accel,
        true_residual_every: args.true_residual_every,
        ..SolverConfig::default()
    }
}

fn krylov_config(args: &SolveArgs) -> KrylovConfig {
    KrylovConfig {
        tolerance: args.eps,
        max_iterations: args.max_iters,
        restart: None,
    }
}

fn finish_baseline(x: Vector, trace: ConvergenceTrace) -> RunOutcome {
    RunOutcome {
        headline_flops: trace.records.last().map(|r| r.flops).unwrap_or(0),
        trace,
        x,
    }
}

fn map_solver_error(e: SolverError) -> CmdError {
    match e {
        SolverError::KindMismatch(_) | SolverError::BlockTooLarge { .. } => {
            CmdError::usage(format!("{e}"))
        }
        other => CmdError::numerical(format!("{other}")),
    }
}

fn map_baseline_error(e: BaselineError) -> CmdError {
    match e {
        BaselineError::DimensionMismatch(_) => CmdError::usage(format!("{e}")),
        other => CmdError::numerical(format!("{other}")),
    }
}

pub fn true_relative_residual(problem: &LinearProblem, x: &Vector) -> f64 {
    let ax = problem.a.matvec(x).expect("dimensions checked by solver");
    let mut diff = 0.0;
    for i in 0..ax.len() {
        let d = ax[i] - problem.b[i];
        diff += d * d;
    }
    diff.sqrt() / problem.b.norm().max(1e-300)
}
