//! Accelerated randomized block Kaczmarz solver for general dense systems.
//!
//! Pipeline per solve: an optional randomized Hadamard rotation of the rows
//! (making row importance nearly uniform), then iterations that sample an
//! equation block, apply a Tikhonov-regularized projection — either exactly or
//! through a sketch-preconditioned LSQR inner solve — and take a momentum
//! step whose strength is tuned online from windowed residual estimates.
//! Sampled blocks and their preconditioner factors are memoized and reused
//! once enough of them have accumulated.

use crate::baselines::{lsqr_solve, LinearOperator};
use crate::linalg::{CholeskyFactor, LinalgError, Matrix, TriangularSide, Vector};
use crate::metering::{
    model_cholesky, model_true_residual, ConvergenceTrace, FlopCategory, FlopCounter, SolveStatus,
    TraceRecord,
};
use crate::problems::{LinearProblem, ProblemKind};
use crate::transforms::{RhtOperator, SrhtSketch, TransformError};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("problem kind mismatch: {0}")]
    KindMismatch(String),
    #[error("block size {s} exceeds system dimensions {m}x{n}")]
    BlockTooLarge { s: usize, m: usize, n: usize },
    #[error("iterate diverged: residual estimate grew by more than 1e6x")]
    Diverged,
    #[error("non-finite iterate encountered at iteration {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// All solver tunables. `Default` gives the recommended settings; `eta = None`
/// resolves to `s/(2n)` at solve time.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub block_size: usize,
    pub lambda: f64,
    /// Momentum step size; `None` means `s/(2n)`.
    pub eta: Option<f64>,
    pub initial_rho: f64,
    /// Inner LSQR iterations (always run in full; no early exit).
    pub t_max: usize,
    /// Sketch width as a multiple of the block size: τ = factor·s.
    pub tau_factor: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub use_rht: bool,
    pub use_memoization: bool,
    pub use_acceleration: bool,
    /// Ablation: replace the inner solver with an exact dense projection.
    pub exact_projection: bool,
    /// Record the true relative residual every k iterations (0 = never);
    /// charged to the instrumentation FLOP category.
    pub true_residual_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            block_size: 64,
            lambda: 1e-8,
            eta: None,
            initial_rho: 0.0,
            t_max: 8,
            tau_factor: 2,
            tolerance: 1e-8,
            max_iterations: 10_000,
            seed: 0,
            use_rht: true,
            use_memoization: true,
            use_acceleration: true,
            exact_projection: false,
            true_residual_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn resolved_eta(&self, n: usize) -> f64 {
        if !self.use_acceleration {
            return 0.0;
        }
        self.eta
            .unwrap_or(self.block_size as f64 / (2.0 * n as f64))
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

/// Momentum recursion: `m ← ((1−ρ)/(1+ρ))(m − w)`, `x ← x − w + η·m`.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub m: Vector,
    pub rho: f64,
    pub eta: f64,
}

impl MomentumState {
    pub fn new(dim: usize, rho: f64, eta: f64) -> Self {
        assert!((0.0..1.0).contains(&rho), "rho must lie in [0,1)");
        MomentumState {
            m: Vector::zeros(dim),
            rho,
            eta,
        }
    }

    /// Apply both recursions; `x` is updated in place. At `ρ = 0` the
    /// recursion is degenerate (the accumulator never decays and its noise
    /// compounds), so the step falls back to the plain update `x ← x − w`
    /// and clears the accumulator.
    pub fn step(&mut self, w: &Vector, x: &mut Vector) {
        if self.rho == 0.0 {
            for i in 0..self.m.len() {
                self.m[i] = 0.0;
            }
            for i in 0..x.len() {
                x[i] -= w[i];
            }
            return;
        }
        let coeff = (1.0 - self.rho) / (1.0 + self.rho);
        for i in 0..self.m.len() {
            self.m[i] = coeff * (self.m[i] - w[i]);
        }
        for i in 0..x.len() {
            x[i] += -w[i] + self.eta * self.m[i];
        }
    }
}

/// Windowed residual accumulator driving both the stopping rule and the
/// online momentum estimate. A cycle spans `2ζ` iterations: the first half
/// fills `E₀`, the second `E₁`; at the cycle boundary the decay ratio `E₁/E₀`
/// enters a weighted average whose weights grow superpolynomially with the
/// checkpoint index, and `ρ = 1 − r^{1/ζ}`.
#[derive(Debug, Clone)]
pub struct ResidualEstimator {
    pub zeta: usize,
    pub e0: f64,
    pub e1: f64,
    pub r: f64,
    checkpoint: usize,
    recent: Vec<f64>,
    pos: usize,
}

/// What the estimator decided at a cycle boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Checkpoint {
    NotYet,
    Stop,
    Continue { rho: f64 },
}

fn averaging_weight(i: usize) -> f64 {
    // a_i = (i+1)^{ln(i+1)}
    let v = (i + 1) as f64;
    v.powf(v.ln())
}

impl ResidualEstimator {
    pub fn new(zeta: usize) -> Self {
        ResidualEstimator {
            zeta: zeta.max(1),
            e0: 0.0,
            e1: 0.0,
            r: 1.0,
            checkpoint: 0,
            recent: Vec::new(),
            pos: 0,
        }
    }

    /// Record a block residual norm-square for iteration `t` and evaluate the
    /// cycle boundary if `t` closes one. `stop_level` is `ε²‖b‖²`.
    pub fn record(&mut self, t: usize, res_sq: f64, stop_level: f64) -> Checkpoint {
        let cycle = t % (2 * self.zeta);
        if cycle < self.zeta {
            self.e0 += res_sq;
        } else {
            self.e1 += res_sq;
        }
        if self.recent.len() < self.zeta {
            self.recent.push(res_sq);
        } else {
            self.recent[self.pos] = res_sq;
            self.pos = (self.pos + 1) % self.zeta;
        }
        if cycle != 2 * self.zeta - 1 {
            return Checkpoint::NotYet;
        }
        if self.e1 <= stop_level {
            return Checkpoint::Stop;
        }
        let rho = self.update_rho();
        self.e0 = 0.0;
        self.e1 = 0.0;
        Checkpoint::Continue { rho }
    }

    /// Weighted-average update of the decay ratio; returns the new ρ. A
    /// stalled window (`E₀ = 0`) leaves the estimate unchanged.
    pub fn update_rho(&mut self) -> f64 {
        if self.e0 > 0.0 {
            let i = self.checkpoint + 1;
            let w = averaging_weight(i - 1) / averaging_weight(i);
            let ratio = self.e1 / self.e0;
            self.r = self.r * w + (1.0 - w) * ratio;
            self.checkpoint = i;
        }
        self.rho_from_ratio()
    }

    pub fn rho_from_ratio(&self) -> f64 {
        (1.0 - self.r.powf(1.0 / self.zeta as f64)).clamp(0.0, 0.99)
    }

    /// Nearly-unbiased estimate of `‖Ax−b‖²`: the mean over the last `ζ`
    /// recorded block residuals, scaled by `rows/s`. A single block residual
    /// is far too noisy on its own — a memoized block whose rows are already
    /// satisfied reads near zero while the global residual is still large.
    pub fn normalized_estimate(&self, scale: f64) -> f64 {
        if self.recent.is_empty() {
            return 0.0;
        }
        let mean = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        mean * scale
    }
}

/// Memoized blocks with their per-block payload (preconditioner factors).
#[derive(Debug, Clone)]
pub struct BlockCache<F> {
    entries: Vec<(Vec<usize>, F)>,
}

impl<F> BlockCache<F> {
    pub fn new() -> Self {
        BlockCache {
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, set: Vec<usize>, payload: F) -> usize {
        self.entries.push((set, payload));
        self.entries.len() - 1
    }

    pub fn get(&self, idx: usize) -> (&[usize], &F) {
        let (s, f) = &self.entries[idx];
        (s, f)
    }
}

impl<F> Default for BlockCache<F> {
    fn default() -> Self {
        BlockCache::new()
    }
}

/// Bernoulli freshness schedule shared by both solvers: at iteration `t` a
/// fresh block is drawn with probability `min{1, caps/t}` (probability 1 at
/// `t = 0`), otherwise a memoized block is reused uniformly.
pub fn wants_fresh_block<R: Rng>(
    t: usize,
    caps: &[f64],
    memoization: bool,
    cache_len: usize,
    rng: &mut R,
) -> bool {
    if !memoization || cache_len == 0 || t == 0 {
        return true;
    }
    let mut p = 1.0f64;
    for &c in caps {
        p = p.min(c / t as f64);
    }
    rng.gen::<f64>() < p
}

/// Uniform s-subset of `[universe]` without replacement (partial
/// Fisher–Yates), returned sorted for contiguous gathers.
pub fn sample_subset<R: Rng>(universe: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut set: Vec<usize> = sample(rng, universe, s).into_vec();
    set.sort_unstable();
    set
}

/// Exact regularized projection `w = A_Sᵀ(A_S A_Sᵀ + λI)⁻¹(A_S x − b_S)`,
/// with pseudoinverse semantics when the Gram matrix is singular at λ = 0.
pub fn regularized_projection_exact(
    a: &Matrix,
    set: &[usize],
    x: &Vector,
    b_s: &Vector,
    lambda: f64,
) -> Result<Vector, SolverError> {
    let a_s = a.select_rows(set);
    let mut r = a_s.matvec(x)?;
    for i in 0..r.len() {
        r[i] -= b_s[i];
    }
    regularized_projection_from_residual(&a_s, &r, lambda)
}

/// Same projection, starting from a precomputed block residual `r = A_Sx − b_S`.
pub fn regularized_projection_from_residual(
    a_s: &Matrix,
    r: &Vector,
    lambda: f64,
) -> Result<Vector, SolverError> {
    let mut gram = Matrix::gemm(a_s, crate::linalg::Transpose::No, a_s, crate::linalg::Transpose::Yes)?;
    gram.add_diagonal(lambda);
    let y = match CholeskyFactor::new(&gram) {
        Ok(f) if lambda > 0.0 || f.jitter() == 0.0 => f.solve_system(r)?,
        _ => {
            // singular Gram matrix at λ = 0: pseudoinverse via SVD
            let e = crate::linalg::sym_eig(&gram)?;
            let cutoff = e.lambda.first().copied().unwrap_or(0.0).max(0.0) * 1e-12;
            let mut y = vec![0.0; r.len()];
            for (k, &ev) in e.lambda.iter().enumerate() {
                if ev > cutoff {
                    let mut proj = 0.0;
                    for i in 0..r.len() {
                        proj += e.v[(i, k)] * r[i];
                    }
                    let coeff = proj / ev;
                    for (i, yi) in y.iter_mut().enumerate() {
                        *yi += coeff * e.v[(i, k)];
                    }
                }
            }
            Vector::from(y)
        }
    };
    Ok(a_s.matvec_transpose(&y)?)
}

/// Per-block sketch preconditioner: `R = chol(Â Âᵀ + λI)` with `Â = A_S Πᵀ`.
#[derive(Debug, Clone)]
pub struct BlockPreconditioner {
    pub factor: CholeskyFactor,
}

impl BlockPreconditioner {
    pub fn build(
        a_s: &Matrix,
        tau: usize,
        lambda: f64,
        seed: u64,
        meter: &mut FlopCounter,
    ) -> Result<Self, SolverError> {
        let sketch = SrhtSketch::new(a_s.cols(), tau, seed)?;
        let (a_hat, sketch_ops) = sketch.apply_right_transpose(a_s)?;
        meter.charge(FlopCategory::Transform, sketch_ops);
        let mut gram = Matrix::gemm(
            &a_hat,
            crate::linalg::Transpose::No,
            &a_hat,
            crate::linalg::Transpose::Yes,
        )?;
        gram.add_diagonal(lambda);
        let s = a_s.rows() as u64;
        meter.charge(FlopCategory::Factorization, 2 * s * s * tau as u64);
        meter.charge(FlopCategory::Factorization, model_cholesky(s));
        Ok(BlockPreconditioner {
            factor: CholeskyFactor::new(&gram)?,
        })
    }
}

/// The implicit preconditioned operator `M = R⁻ᵀ[A_S √λI]` of the inner
/// least-squares system; never materialized.
struct PreconditionedBlock<'a> {
    a_s: &'a Matrix,
    factor: &'a CholeskyFactor,
    sqrt_lambda: f64,
}

impl LinearOperator for PreconditionedBlock<'_> {
    fn rows(&self) -> usize {
        self.a_s.rows()
    }
    fn cols(&self) -> usize {
        self.a_s.cols() + self.a_s.rows()
    }
    fn apply(&self, v: &Vector) -> Vector {
        let n = self.a_s.cols();
        let s = self.a_s.rows();
        let w = Vector::from(v.as_slice()[..n].to_vec());
        let mut z = self.a_s.matvec(&w).expect("dims");
        for i in 0..s {
            z[i] += self.sqrt_lambda * v[n + i];
        }
        self.factor
            .solve(&z, TriangularSide::UpperTransposed)
            .expect("nonsingular factor")
    }
    fn apply_transpose(&self, u: &Vector) -> Vector {
        let n = self.a_s.cols();
        let s = self.a_s.rows();
        let y = self
            .factor
            .solve(u, TriangularSide::Upper)
            .expect("nonsingular factor");
        let top = self.a_s.matvec_transpose(&y).expect("dims");
        let mut out = vec![0.0; n + s];
        out[..n].copy_from_slice(top.as_slice());
        for i in 0..s {
            out[n + i] = self.sqrt_lambda * y[i];
        }
        Vector::from(out)
    }
}

/// Sketch-preconditioned inner solve for the regularized projection: runs
/// exactly `t_max` LSQR iterations on the implicit system `M[w;v] = R⁻ᵀr` and
/// returns the leading-n coordinates.
pub fn proj_lsqr(
    a_s: &Matrix,
    precond: &BlockPreconditioner,
    r: &Vector,
    lambda: f64,
    t_max: usize,
    meter: &mut FlopCounter,
) -> Result<Vector, SolverError> {
    let s = a_s.rows() as u64;
    let n = a_s.cols() as u64;
    let op = PreconditionedBlock {
        a_s,
        factor: &precond.factor,
        sqrt_lambda: lambda.max(0.0).sqrt(),
    };
    let rhs = precond.factor.solve(r, TriangularSide::UpperTransposed)?;
    meter.charge(FlopCategory::InnerSolver, s * s);
    let x = lsqr_solve(&op, &rhs, t_max);
    // per LSQR iteration: one forward and one transpose product
    // (2sn + s² each plus O(n+s) vector work)
    let per_iter = 2 * (2 * s * n + s * s) + 8 * (n + s);
    meter.charge(FlopCategory::InnerSolver, per_iter * t_max as u64);
    Ok(Vector::from(x.as_slice()[..a_s.cols()].to_vec()))
}

/// Outcome of a solve: the iterate, the trace, and the meter.
pub struct SolveOutput {
    pub x: Vector,
    pub trace: ConvergenceTrace,
    pub meter: FlopCounter,
}

/// Run the full solver on a general system.
pub fn solve(problem: &LinearProblem, config: &SolverConfig) -> Result<SolveOutput, SolverError> {
    if problem.kind != ProblemKind::General {
        return Err(SolverError::KindMismatch(
            "this solver expects a general system; use the coordinate-descent \
             solver for positive definite kinds"
                .to_string(),
        ));
    }
    let m = problem.rows();
    let n = problem.cols();
    let s = config.block_size;
    if s > m || s > n {
        return Err(SolverError::BlockTooLarge { s, m, n });
    }
    let mut meter = FlopCounter::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Row-side preprocessing: rotate equations so no single row dominates.
    // Padding rows (if any) carry zero equations and do not affect x.
    let (work_a, work_b) = if config.use_rht {
        let rht = RhtOperator::new(m, rng.gen());
        let (qa, ops_a) = rht.apply(&problem.a)?;
        let (qb, ops_b) = rht.apply_vector(&problem.b)?;
        meter.charge(FlopCategory::Transform, ops_a + ops_b);
        (qa, qb)
    } else {
        (problem.a.clone(), problem.b.clone())
    };
    let rows = work_a.rows();
    let zeta = rows.div_ceil(s);
    let eta = config.resolved_eta(n);
    let tau = (config.tau_factor * s).min(n.next_power_of_two());

    let mut x = Vector::zeros(n);
    let mut momentum = MomentumState::new(n, config.initial_rho, eta);
    let mut estimator = ResidualEstimator::new(zeta);
    let mut cache: BlockCache<Option<BlockPreconditioner>> = BlockCache::new();
    let stop_level = config.tolerance * config.tolerance * work_b.norm_sq();
    let b_norm = problem.b.norm().max(1e-300);
    let residual_scale = rows as f64 / s as f64;
    let caps = [
        (rows as f64 / s as f64) * (rows as f64).ln(),
        (n as f64 / s as f64) * (rows as f64).ln(),
    ];

    let mut trace = ConvergenceTrace {
        solver: "kaczmarz".to_string(),
        config: config.snapshot(),
        records: Vec::new(),
        status: SolveStatus::Budget,
    };
    let mut initial_estimate = None;

    for t in 0..config.max_iterations {
        let idx = if wants_fresh_block(t, &caps, config.use_memoization, cache.len(), &mut rng) {
            let set = sample_subset(rows, s, &mut rng);
            let payload = if config.exact_projection {
                None
            } else {
                let a_s = work_a.select_rows(&set);
                Some(BlockPreconditioner::build(
                    &a_s,
                    tau,
                    config.lambda,
                    rng.gen(),
                    &mut meter,
                )?)
            };
            cache.push(set, payload)
        } else {
            rng.gen_range(0..cache.len())
        };
        let (set, _) = cache.get(idx);
        let set = set.to_vec();
        let a_s = work_a.select_rows(&set);
        let mut r = a_s.matvec(&x)?;
        for (k, &i) in set.iter().enumerate() {
            r[k] -= work_b[i];
        }
        meter.charge(FlopCategory::Projection, 2 * (s * n) as u64 + s as u64);
        let res_sq = r.norm_sq();

        let w = if config.exact_projection {
            regularized_projection_from_residual(&a_s, &r, config.lambda)?
        } else {
            let (_, payload) = cache.get(idx);
            let precond = payload.as_ref().expect("preconditioner present");
            proj_lsqr(&a_s, precond, &r, config.lambda, config.t_max, &mut meter)?
        };
        momentum.step(&w, &mut x);
        meter.charge(FlopCategory::Projection, 4 * n as u64);
        if !x.is_finite() {
            trace.status = SolveStatus::Error;
            return Err(SolverError::NonFinite(t));
        }

        let checkpoint = estimator.record(t, res_sq, stop_level);
        let est = estimator.normalized_estimate(residual_scale).sqrt() / b_norm;
        let init = *initial_estimate.get_or_insert(est.max(1e-300));
        let true_res = if config.true_residual_every > 0 && t % config.true_residual_every == 0 {
            meter.charge(
                FlopCategory::Instrumentation,
                model_true_residual(m as u64, n as u64),
            );
            Some(problem.a.matvec(&x)?.sub(&problem.b).norm() / b_norm)
        } else {
            None
        };
        trace.push(TraceRecord {
            iteration: t as u64 + 1,
            flops: meter.headline(),
            residual_estimate: est,
            residual_true: true_res,
            rho: momentum.rho,
        });
        if est > 1e6 * init {
            trace.status = SolveStatus::Error;
            return Err(SolverError::Diverged);
        }

        match checkpoint {
            Checkpoint::Stop => {
                trace.status = SolveStatus::Converged;
                break;
            }
            Checkpoint::Continue { rho } => {
                if config.use_acceleration {
                    momentum.rho = rho;
                }
            }
            Checkpoint::NotYet => {}
        }
    }
    Ok(SolveOutput { x, trace, meter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_low_rank, ProblemMetadata, SpectrumSpec};
    use rand_distr::{Distribution, StandardNormal};

    fn meta() -> ProblemMetadata {
        ProblemMetadata::new("test", "{}", 0)
    }

    fn random_vector(n: usize, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vector::from(
            (0..n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>(),
        )
    }

    #[test]
    fn momentum_rho_zero_is_plain_step() {
        let mut st = MomentumState::new(2, 0.0, 0.3);
        st.m = Vector::from(vec![5.0, -5.0]);
        let w = Vector::from(vec![1.0, 2.0]);
        let mut x = Vector::from(vec![0.5, 0.5]);
        st.step(&w, &mut x);
        // Degenerate rate: accumulator cleared, x ← x − w.
        assert_eq!(st.m.as_slice(), &[0.0, 0.0]);
        assert!((x[0] - (0.5 - 1.0)).abs() < 1e-15);
        assert!((x[1] - (0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn momentum_eta_zero_is_plain_step() {
        let mut st = MomentumState::new(2, 0.2, 0.0);
        let w = Vector::from(vec![1.0, -1.0]);
        let mut x = Vector::from(vec![0.0, 0.0]);
        st.step(&w, &mut x);
        assert_eq!(x.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn estimator_first_checkpoint_example() {
        // ζ=2, prior r=1, ratio E₁/E₀ = 0.25
        let mut est = ResidualEstimator::new(2);
        est.e0 = 4.0;
        est.e1 = 1.0;
        let rho = est.update_rho();
        let w = 1.0 / 2f64.powf(2f64.ln());
        let r_expect = w + (1.0 - w) * 0.25;
        assert!((est.r - r_expect).abs() < 1e-12);
        assert!((rho - (1.0 - r_expect.powf(0.5))).abs() < 1e-12);
        assert!((rho - 0.1550).abs() < 5e-4, "rho = {rho}");
    }

    #[test]
    fn estimator_no_progress_keeps_rho_zero() {
        let mut est = ResidualEstimator::new(2);
        for _ in 0..5 {
            est.e0 = 1.0;
            est.e1 = 1.0;
            let rho = est.update_rho();
            assert!(rho.abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_growth_clamps_to_zero() {
        let mut est = ResidualEstimator::new(2);
        est.e0 = 1.0;
        est.e1 = 100.0;
        let rho = est.update_rho();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn estimator_stalled_window_skips() {
        let mut est = ResidualEstimator::new(2);
        est.e0 = 0.0;
        est.e1 = 5.0;
        let r_before = est.r;
        est.update_rho();
        assert_eq!(est.r, r_before);
    }

    #[test]
    fn fresh_always_at_t_zero_and_without_memoization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(wants_fresh_block(0, &[0.1], true, 5, &mut rng));
        for t in 1..100 {
            assert!(wants_fresh_block(t, &[1e9], false, 5, &mut rng));
        }
    }

    #[test]
    fn exact_projection_orthonormal_rows() {
        // λ=0 and orthonormal block rows: w = A_Sᵀ(A_Sx − b_S)
        let a = Matrix::identity(4);
        let x = Vector::from(vec![1.0, 2.0, 3.0, 4.0]);
        let b_s = Vector::from(vec![0.5, 0.5]);
        let set = [1usize, 3];
        let w = regularized_projection_exact(&a, &set, &x, &b_s, 0.0).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.5, 0.0, 3.5]);
    }

    #[test]
    fn exact_projection_large_lambda_shrinks() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let x = Vector::from(vec![1.0, 1.0]);
        let b_s = Vector::zeros(3);
        let set = [0usize, 1, 2];
        let w = regularized_projection_exact(&a, &set, &x, &b_s, 1e12).unwrap();
        let r_norm = a.matvec(&x).unwrap().norm();
        assert!(w.norm() <= 1e-9 * r_norm * a.frobenius_norm());
    }

    #[test]
    fn exact_projection_small_instance_matches_normal_equations() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let x = Vector::from(vec![1.0, 1.0]);
        let b_s = Vector::zeros(3);
        let set = [0usize, 1, 2];
        let w = regularized_projection_exact(&a, &set, &x, &b_s, 1.0).unwrap();
        // (A Aᵀ + I) y = Ax with A Aᵀ = [[1,0,1],[0,1,1],[1,1,2]]
        let gram = Matrix::from_rows(&[
            vec![2.0, 0.0, 1.0],
            vec![0.0, 2.0, 1.0],
            vec![1.0, 1.0, 3.0],
        ]);
        let y = CholeskyFactor::new(&gram)
            .unwrap()
            .solve_system(&a.matvec(&x).unwrap())
            .unwrap();
        let expect = a.matvec_transpose(&y).unwrap();
        assert!(w.sub(&expect).norm() < 1e-12);
    }

    #[test]
    fn exact_projection_rank_deficient_lambda_zero() {
        // duplicated row → singular Gram matrix, pseudoinverse path
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let x = Vector::from(vec![2.0, 5.0]);
        let b_s = Vector::zeros(2);
        let w = regularized_projection_exact(&a, &[0, 1], &x, &b_s, 0.0).unwrap();
        // projection onto span{e₁} of the error: w = (2, 0)
        assert!((w[0] - 2.0).abs() < 1e-10);
        assert!(w[1].abs() < 1e-10);
    }

    #[test]
    fn proj_lsqr_zero_rhs() {
        let a_s = Matrix::from_rows(&[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]]);
        let mut meter = FlopCounter::new();
        let p = BlockPreconditioner::build(&a_s, 4, 1e-8, 0, &mut meter).unwrap();
        let w = proj_lsqr(&a_s, &p, &Vector::zeros(2), 1e-8, 8, &mut meter).unwrap();
        assert_eq!(w, Vector::zeros(4));
    }

    #[test]
    fn proj_lsqr_converges_to_exact_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = 6;
        let n = 16;
        let a_s = Matrix::from_vec(
            s,
            n,
            (0..s * n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>(),
        );
        let r = random_vector(s, 5);
        let lambda = 1e-4;
        let mut meter = FlopCounter::new();
        let p = BlockPreconditioner::build(&a_s, 2 * s, lambda, 9, &mut meter).unwrap();
        let w = proj_lsqr(&a_s, &p, &r, lambda, 200, &mut meter).unwrap();
        let exact = regularized_projection_from_residual(&a_s, &r, lambda).unwrap();
        assert!(
            w.sub(&exact).norm() <= 1e-8 * exact.norm().max(1.0),
            "deviation {}",
            w.sub(&exact).norm()
        );
    }

    #[test]
    fn identity_problem_converges_immediately() {
        let n = 32;
        let b = random_vector(n, 2);
        let p = LinearProblem::new(
            ProblemKind::General,
            Matrix::identity(n),
            b.clone(),
            None,
            0.0,
            meta(),
        )
        .unwrap();
        let cfg = SolverConfig {
            block_size: n,
            use_rht: false,
            exact_projection: true,
            use_acceleration: false,
            lambda: 0.0,
            tolerance: 1e-12,
            ..Default::default()
        };
        let out = solve(&p, &cfg).unwrap();
        assert!(out.trace.records.len() <= 2);
        assert!(out.x.sub(&b).norm() <= 1e-11 * b.norm());
    }

    #[test]
    fn low_rank_system_converges() {
        let spec = SpectrumSpec {
            effective_rank: 16,
            tail_strength: 0.05,
        };
        let a = make_low_rank(512, 128, &spec, 33).unwrap();
        let x_star = random_vector(128, 4);
        let b = a.matvec(&x_star).unwrap();
        let p = LinearProblem::new(ProblemKind::General, a, b, None, 0.0, meta()).unwrap();
        let cfg = SolverConfig {
            block_size: 64,
            tolerance: 1e-8,
            max_iterations: 500,
            seed: 7,
            ..Default::default()
        };
        let out = solve(&p, &cfg).unwrap();
        assert_eq!(out.trace.status, SolveStatus::Converged);
        let rel = out.x.sub(&x_star).norm() / x_star.norm();
        assert!(rel <= 1e-7, "relative error {rel}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SpectrumSpec {
            effective_rank: 4,
            tail_strength: 0.1,
        };
        let a = make_low_rank(64, 32, &spec, 8).unwrap();
        let b = a.matvec(&random_vector(32, 9)).unwrap();
        let p = LinearProblem::new(ProblemKind::General, a, b, None, 0.0, meta()).unwrap();
        let cfg = SolverConfig {
            block_size: 8,
            tolerance: 1e-6,
            max_iterations: 200,
            seed: 5,
            ..Default::default()
        };
        let o1 = solve(&p, &cfg).unwrap();
        let o2 = solve(&p, &cfg).unwrap();
        assert_eq!(o1.x, o2.x);
        assert_eq!(o1.trace.records, o2.trace.records);
    }

    #[test]
    fn classical_block_kaczmarz_zeroes_block_residual() {
        // acceleration and memoization off, λ=0, exact projections:
        // each step must zero its own block residual
        let spec = SpectrumSpec {
            effective_rank: 4,
            tail_strength: 0.3,
        };
        let a = make_low_rank(32, 16, &spec, 3).unwrap();
        let x_star = random_vector(16, 6);
        let b = a.matvec(&x_star).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Vector::zeros(16);
        for _ in 0..50 {
            let set = sample_subset(32, 4, &mut rng);
            let b_s = Vector::from(set.iter().map(|&i| b[i]).collect::<Vec<_>>());
            let w = regularized_projection_exact(&a, &set, &x, &b_s, 0.0).unwrap();
            for i in 0..16 {
                x[i] -= w[i];
            }
            let a_s = a.select_rows(&set);
            let block_res = a_s.matvec(&x).unwrap().sub(&b_s).norm();
            assert!(block_res <= 1e-10 * b.norm().max(1.0), "residual {block_res}");
        }
    }

    #[test]
    fn cache_growth_follows_schedule() {
        // the Bernoulli schedule caps expected cache size near (m/s)·log m
        let m = 256f64;
        let s = 32f64;
        let mut successes = 0;
        let trials = 20;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let caps = [(m / s) * m.ln(), (64.0 / s) * m.ln()];
            let mut cache_len = 0usize;
            for t in 0..10_000 {
                if wants_fresh_block(t, &caps, true, cache_len, &mut rng) {
                    cache_len += 1;
                    let _ = sample_subset(256, 32, &mut rng);
                } else {
                    let _ = rng.gen_range(0..cache_len);
                }
            }
            let lo = ((64.0 / s) * m.ln()).ceil();
            let hi = 4.0 * (m / s) * m.ln() * (10_000f64).ln();
            if cache_len as f64 >= lo && cache_len as f64 <= hi {
                successes += 1;
            }
        }
        assert!(successes * 100 >= trials * 99, "{successes}/{trials}");
    }
}
