//! `kaczpp bench`: run a manifest of (problem, solver, seeds) cells and write
//! a CSV table of median FLOPs-to-threshold per cell. Non-converged cells get
//! an "∞" sentinel; per-cell failures are recorded and the run continues.

use crate::generate::{build_kernel, build_lowrank};
use crate::solve::{run_solver, SolveArgs, SolverArg};
use crate::CmdError;
use kaczpp::linalg::Matrix;
use kaczpp::problems::{
    load_csv, load_problem, standard_normal_vector, KernelKind, KernelSpec, LinearProblem,
    SpectrumSpec,
};
use serde::Deserialize;
use std::io::Write;
use std::path::PathBuf;

#[derive(clap::Args)]
pub struct BenchArgs {
    /// Benchmark manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; the manifest's `output` path is relative to it.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Deserialize)]
struct Manifest {
    /// CSV file name, relative to the --out directory.
    output: String,
    /// Relative-residual thresholds, strictly descending.
    thresholds: Vec<f64>,
    cells: Vec<Cell>,
}

#[derive(Deserialize)]
struct Cell {
    dataset: String,
    problem: ProblemSpec,
    solver: SolverSpec,
    seeds: Vec<u64>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ProblemSpec {
    File {
        path: String,
    },
    Lowrank {
        m: usize,
        n: usize,
        #[serde(default = "default_er")]
        effective_rank: usize,
        #[serde(default = "default_tail")]
        tail_strength: f64,
        #[serde(default)]
        seed: u64,
    },
    Kernel {
        points: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        kernel: String,
        gamma: f64,
        #[serde(default = "default_phi")]
        phi: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        csv: Option<String>,
    },
}

fn default_er() -> usize {
    16
}
fn default_tail() -> f64 {
    0.05
}
fn default_dim() -> usize {
    1
}
fn default_phi() -> f64 {
    1e-3
}

#[derive(Deserialize)]
struct SolverSpec {
    /// kzpp | cdpp | cg | gmres
    name: String,
    #[serde(default)]
    block_size: Option<usize>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    tmax: Option<usize>,
    #[serde(default)]
    tau_factor: Option<usize>,
    #[serde(default)]
    max_iters: Option<usize>,
    #[serde(default)]
    no_rht: bool,
    #[serde(default)]
    no_memo: bool,
    #[serde(default)]
    no_accel: bool,
}

pub fn run(args: &BenchArgs) -> Result<(), CmdError> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CmdError::usage(format!("reading {}: {e}", args.manifest.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CmdError::usage(format!("manifest: {e}")))?;
    validate(&manifest)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CmdError::numerical(format!("creating {}: {e}", args.out.display())))?;
    let csv_path = args.out.join(&manifest.output);
    let mut csv = String::from("dataset,kernel,width,solver,threshold,flops\n");

    for cell in &manifest.cells {
        let (kernel_label, width_label) = match &cell.problem {
            ProblemSpec::Kernel { kernel, gamma, .. } => (kernel.clone(), format!("{gamma}")),
            _ => ("-".to_string(), "-".to_string()),
        };
        let medians = run_cell(cell, &manifest.thresholds, args);
        for (threshold, flops) in manifest.thresholds.iter().zip(&medians) {
            let flops_text = match flops {
                Some(f) => f.to_string(),
                None => "∞".to_string(),
            };
            csv.push_str(&format!(
                "{},{},{},{},{:e},{}\n",
                cell.dataset, kernel_label, width_label, cell.solver.name, threshold, flops_text
            ));
        }
    }

    let mut file = std::fs::File::create(&csv_path)
        .map_err(|e| CmdError::numerical(format!("creating {}: {e}", csv_path.display())))?;
    file.write_all(csv.as_bytes())
        .map_err(|e| CmdError::numerical(format!("writing {}: {e}", csv_path.display())))?;
    println!("{}", serde_json::json!({ "csv": csv_path.display().to_string(), "rows": manifest.cells.len() * manifest.thresholds.len() }));
    Ok(())
}

fn validate(manifest: &Manifest) -> Result<(), CmdError> {
    if manifest.cells.is_empty() {
        return Err(CmdError::usage("manifest has no cells"));
    }
    if manifest.thresholds.is_empty() {
        return Err(CmdError::usage("manifest has no thresholds"));
    }
    for pair in manifest.thresholds.windows(2) {
        if pair[1] >= pair[0] {
            return Err(CmdError::usage("thresholds must be strictly descending"));
        }
    }
    for cell in &manifest.cells {
        if cell.seeds.is_empty() {
            return Err(CmdError::usage(format!("cell {}: no seeds", cell.dataset)));
        }
        solver_arg(&cell.solver.name)?;
    }
    Ok(())
}

/// Median FLOPs-to-threshold over the cell's seeds, one entry per threshold;
/// `None` is the "not reached" sentinel.
fn run_cell(cell: &Cell, thresholds: &[f64], args: &BenchArgs) -> Vec<Option<u64>> {
    let problem = match build_cell_problem(&cell.problem, args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cell {}: problem build failed: {}", cell.dataset, e.message);
            return vec![None; thresholds.len()];
        }
    };
    let tolerance = *thresholds.last().unwrap();
    let mut per_seed: Vec<Vec<Option<u64>>> = Vec::new();
    for &seed in &cell.seeds {
        let solve_args = cell_solve_args(&cell.solver, seed, tolerance);
        match solve_args.and_then(|a| run_solver(&problem, &a)) {
            Ok(outcome) => {
                per_seed.push(
                    thresholds
                        .iter()
                        .map(|&t| {
                            outcome
                                .trace
                                .records
                                .iter()
                                .find(|r| r.residual_estimate <= t)
                                .map(|r| r.flops)
                        })
                        .collect(),
                );
            }
            Err(e) => {
                eprintln!(
                    "cell {} seed {seed}: solver failed: {}",
                    cell.dataset, e.message
                );
                per_seed.push(vec![None; thresholds.len()]);
            }
        }
    }
    (0..thresholds.len())
        .map(|j| {
            // lower median, with "not reached" sorting last
            let mut column: Vec<Option<u64>> = per_seed.iter().map(|row| row[j]).collect();
            column.sort_by_key(|v| v.unwrap_or(u64::MAX));
            column[(column.len() - 1) / 2]
        })
        .collect()
}

fn build_cell_problem(spec: &ProblemSpec, args: &BenchArgs) -> Result<LinearProblem, CmdError> {
    match spec {
        ProblemSpec::File { path } => {
            let full = args.out.join(path);
            load_problem(&full)
                .map_err(|e| CmdError::usage(format!("reading {}: {e}", full.display())))
        }
        ProblemSpec::Lowrank {
            m,
            n,
            effective_rank,
            tail_strength,
            seed,
        } => build_lowrank(
            *m,
            *n,
            &SpectrumSpec {
                effective_rank: *effective_rank,
                tail_strength: *tail_strength,
            },
            *seed,
        ),
        ProblemSpec::Kernel {
            points,
            dim,
            kernel,
            gamma,
            phi,
            seed,
            csv,
        } => {
            let data = match csv {
                Some(path) => {
                    let full = args.out.join(path);
                    load_csv(&full, Some(*points))
                        .map_err(|e| CmdError::usage(format!("reading {}: {e}", full.display())))?
                }
                None => {
                    let flat = standard_normal_vector(points * dim, *seed);
                    Matrix::from_vec(*points, *dim, flat.as_slice().to_vec())
                }
            };
            let spec = KernelSpec {
                kernel: match kernel.as_str() {
                    "gaussian" => KernelKind::Gaussian,
                    "laplacian" => KernelKind::Laplacian,
                    other => {
                        return Err(CmdError::usage(format!("unknown kernel '{other}'")));
                    }
                },
                gamma: *gamma,
            };
            build_kernel(&data, &spec, *phi, *seed)
        }
    }
}

fn solver_arg(name: &str) -> Result<SolverArg, CmdError> {
    match name {
        "kzpp" => Ok(SolverArg::Kzpp),
        "cdpp" => Ok(SolverArg::Cdpp),
        "cg" => Ok(SolverArg::Cg),
        "gmres" => Ok(SolverArg::Gmres),
        other => Err(CmdError::usage(format!("unknown solver '{other}'"))),
    }
}

fn cell_solve_args(spec: &SolverSpec, seed: u64, tolerance: f64) -> Result<SolveArgs, CmdError> {
    Ok(SolveArgs {
        problem: PathBuf::new(), // unused: the problem is passed directly
        solver: solver_arg(&spec.name)?,
        block_size: spec.block_size.unwrap_or(64),
        lambda: spec.lambda.unwrap_or(1e-8),
        tmax: spec.tmax.unwrap_or(8),
        tau_factor: spec.tau_factor.unwrap_or(2),
        eps: tolerance,
        max_iters: spec.max_iters.unwrap_or(10_000),
        seed,
        no_rht: spec.no_rht,
        no_memo: spec.no_memo,
        no_accel: spec.no_accel,
        trace: None,
        true_residual_every: 0,
    })
}
