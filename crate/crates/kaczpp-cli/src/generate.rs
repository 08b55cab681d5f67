//! `kaczpp generate`: build a problem file and print a JSON spectral summary.

use crate::CmdError;
use clap::{Args, ValueEnum};
use kaczpp::linalg::Matrix;
use kaczpp::oracles::spectral_summary;
use kaczpp::problems::{
    kernel_matrix, load_csv, make_low_rank, psd_problem, save_problem, standard_normal_vector,
    KernelKind, KernelSpec, LinearProblem, ProblemKind, ProblemMetadata, SpectrumSpec,
};
use std::path::PathBuf;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    /// Rectangular least-squares system with a bell-shaped singular spectrum.
    Lowrank,
    /// Square positive definite kernel system `(K + phi*I) x = b`.
    Kernel,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Laplacian,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Problem family.
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Rows (lowrank) or number of data points (kernel).
    #[arg(long)]
    pub m: Option<usize>,
    /// Columns (lowrank) or data dimension (kernel without --csv).
    #[arg(long)]
    pub n: Option<usize>,
    /// Width of the singular-value head (lowrank only).
    #[arg(long)]
    pub effective_rank: Option<usize>,
    /// Relative weight of the slowly decaying tail (lowrank only).
    #[arg(long)]
    pub tail_strength: Option<f64>,
    /// Kernel family (kernel only).
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Kernel bandwidth (kernel only).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Diagonal shift added to the kernel matrix (kernel only).
    #[arg(long)]
    pub phi: Option<f64>,
    /// Read kernel data points from a CSV file instead of sampling them.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Destination problem file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenerateArgs) -> Result<(), CmdError> {
    let problem = build_problem(args)?;
    save_problem(&args.out, &problem)
        .map_err(|e| CmdError::numerical(format!("writing {}: {e}", args.out.display())))?;

    // κ̄_k table; skip any k at or beyond the numerical rank.
    let k_list: Vec<usize> = [8usize, 16, 32, 64]
        .into_iter()
        .filter(|&k| k + 1 < problem.a.rows().min(problem.a.cols()))
        .collect();
    let summary = spectral_summary(&problem.a, &k_list, &[])
        .map_err(|e| CmdError::numerical(format!("spectral summary: {e}")))?;
    let kappa_bar: Vec<serde_json::Value> = summary
        .kappa_bar
        .iter()
        .map(|&(k, v)| serde_json::json!({ "k": k, "kappa_bar": v }))
        .collect();
    let report = serde_json::json!({
        "kind": match problem.kind {
            ProblemKind::General => "general",
            ProblemKind::Psd => "psd",
        },
        "rows": problem.a.rows(),
        "cols": problem.a.cols(),
        "phi": problem.phi,
        "out": args.out.display().to_string(),
        "kappa_bar": kappa_bar,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

pub fn build_problem(args: &GenerateArgs) -> Result<LinearProblem, CmdError> {
    match args.kind {
        KindArg::Lowrank => {
            if args.kernel.is_some()
                || args.gamma.is_some()
                || args.phi.is_some()
                || args.csv.is_some()
            {
                return Err(CmdError::usage(
                    "--kernel/--gamma/--phi/--csv only apply to --kind kernel",
                ));
            }
            let m = args.m.unwrap_or(512);
            let n = args.n.unwrap_or(128);
            let spec = SpectrumSpec {
                effective_rank: args.effective_rank.unwrap_or(16),
                tail_strength: args.tail_strength.unwrap_or(0.05),
            };
            build_lowrank(m, n, &spec, args.seed)
        }
        KindArg::Kernel => {
            if args.effective_rank.is_some() || args.tail_strength.is_some() {
                return Err(CmdError::usage(
                    "--effective-rank/--tail-strength only apply to --kind lowrank",
                ));
            }
            let spec = KernelSpec {
                kernel: match args.kernel.unwrap_or(KernelArg::Gaussian) {
                    KernelArg::Gaussian => KernelKind::Gaussian,
                    KernelArg::Laplacian => KernelKind::Laplacian,
                },
                gamma: args.gamma.unwrap_or(0.1),
            };
            let data = match &args.csv {
                Some(path) => load_csv(path, args.m)
                    .map_err(|e| CmdError::usage(format!("reading {}: {e}", path.display())))?,
                None => {
                    let m = args.m.unwrap_or(512);
                    let n = args.n.unwrap_or(1);
                    let flat = standard_normal_vector(m * n, args.seed);
                    Matrix::from_vec(m, n, flat.as_slice().to_vec())
                }
            };
            build_kernel(&data, &spec, args.phi.unwrap_or(1e-3), args.seed)
        }
    }
}

pub fn build_lowrank(
    m: usize,
    n: usize,
    spec: &SpectrumSpec,
    seed: u64,
) -> Result<LinearProblem, CmdError> {
    let a = make_low_rank(m, n, spec, seed)
        .map_err(|e| CmdError::usage(format!("low-rank generator: {e}")))?;
    let x_star = standard_normal_vector(n, seed.wrapping_add(1));
    let b = a
        .matvec(&x_star)
        .map_err(|e| CmdError::numerical(format!("{e}")))?;
    let meta = ProblemMetadata::new(
        "lowrank",
        &format!(
            "m={m} n={n} er={} tail={}",
            spec.effective_rank, spec.tail_strength
        ),
        seed,
    );
    LinearProblem::new(ProblemKind::General, a, b, Some(x_star), 0.0, meta)
        .map_err(|e| CmdError::usage(format!("{e}")))
}

pub fn build_kernel(
    data: &Matrix,
    spec: &KernelSpec,
    phi: f64,
    seed: u64,
) -> Result<LinearProblem, CmdError> {
    let k = kernel_matrix(data, spec);
    let meta = ProblemMetadata::new(
        "kernel",
        &format!(
            "points={} dim={} kernel={:?} gamma={} phi={phi}",
            data.rows(),
            data.cols(),
            spec.kernel,
            spec.gamma
        ),
        seed,
    );
    psd_problem(&k, phi, seed.wrapping_add(1), meta)
        .map_err(|e| CmdError::numerical(format!("{e}")))
}
