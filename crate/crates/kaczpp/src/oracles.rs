//! Small-scale enumeration and spectral oracles.
//!
//! These compute the solver theory's quantities exactly at tiny sizes —
//! expected regularized projections over all blocks, determinantal subset
//! distributions, convergence-rate parameters — so the convergence claims can
//! be checked numerically instead of taken on faith. Everything here is a
//! diagnostic; nothing is needed on the solve path.

use crate::kaczmarz::{regularized_projection_exact, sample_subset, MomentumState};
use crate::linalg::{sym_eig, CholeskyFactor, LinalgError, Matrix, Transpose, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("subset count C({m},{s}) = {count} exceeds the enumeration cap {cap}")]
    TooManySubsets {
        m: usize,
        s: usize,
        count: u128,
        cap: u128,
    },
    #[error("k = {k} must be below rank(A) = {rank}")]
    KTooLarge { k: usize, rank: usize },
    #[error("matrix is not positive semidefinite (λ_min = {0:e})")]
    NotPsd(f64),
    #[error("dimension cap exceeded: {0}")]
    TooLarge(String),
    #[error("null spaces of the expected projection and the reference matrix differ (gap {0:e})")]
    NullSpaceMismatch(f64),
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Solver(#[from] crate::kaczmarz::SolverError),
}

/// One named numeric check; `bound` is the value it was compared against.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl OracleCheck {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        OracleCheck {
            name: name.to_string(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        OracleCheck {
            name: name.to_string(),
            value,
            bound,
            pass: value >= bound,
        }
    }
}

// ---------------------------------------------------------------------------
// spectral summaries

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub sigma: Vec<f64>,
    pub rank: usize,
    /// (k, κ̄_k) pairs: the Frobenius-normalized condition number of A with
    /// its top-k singular directions removed.
    pub kappa_bar: Vec<(usize, f64)>,
    /// (k, λ̄_k) pairs: mean squared tail singular value per head direction.
    pub lambda_bar: Vec<(usize, f64)>,
    /// (λ, d_λ) pairs: the λ-effective dimension.
    pub effective_dim: Vec<(f64, f64)>,
}

const RANK_CUTOFF: f64 = 1e-10;

pub fn numerical_rank(sigma: &[f64]) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().filter(|&&s| s > RANK_CUTOFF * top).count()
}

/// Mean squared tail singular value: `λ̄_k = (1/k)·Σ_{i>k} σ_i²`.
pub fn lambda_bar(sigma: &[f64], k: usize) -> f64 {
    sigma[k..].iter().map(|s| s * s).sum::<f64>() / k as f64
}

pub fn spectral_summary(
    a: &Matrix,
    k_list: &[usize],
    lambda_list: &[f64],
) -> Result<SpectralSummary, OracleError> {
    if a.rows().min(a.cols()) > 2048 {
        return Err(OracleError::TooLarge(format!(
            "{}x{} exceeds the 2048 summary cap",
            a.rows(),
            a.cols()
        )));
    }
    let svd = crate::linalg::svd(a)?;
    let sigma = svd.sigma;
    let rank = numerical_rank(&sigma);
    let top = sigma.first().copied().unwrap_or(0.0);
    let mut kappa_bar = Vec::new();
    let mut lbar = Vec::new();
    for &k in k_list {
        if k >= rank {
            return Err(OracleError::KTooLarge { k, rank });
        }
        let tail = &sigma[k..];
        let fro = tail.iter().map(|s| s * s).sum::<f64>().sqrt();
        let min_pos = tail
            .iter()
            .filter(|&&s| s > RANK_CUTOFF * top)
            .fold(f64::INFINITY, |m, &s| m.min(s));
        let tail_rank = tail.iter().filter(|&&s| s > RANK_CUTOFF * top).count();
        kappa_bar.push((k, fro / min_pos / (tail_rank as f64).sqrt()));
        lbar.push((k, lambda_bar(&sigma, k)));
    }
    let effective_dim = lambda_list
        .iter()
        .map(|&l| {
            let d = sigma
                .iter()
                .map(|&s| {
                    let s2 = s * s;
                    if s2 == 0.0 && l == 0.0 {
                        0.0
                    } else {
                        s2 / (s2 + l)
                    }
                })
                .sum::<f64>();
            (l, d)
        })
        .collect();
    Ok(SpectralSummary {
        sigma,
        rank,
        kappa_bar,
        lambda_bar: lbar,
        effective_dim,
    })
}

// ---------------------------------------------------------------------------
// projection ensembles

/// All size-`s` subsets of `[m]` in lexicographic order.
pub fn enumerate_subsets(m: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..s).collect();
    loop {
        out.push(current.clone());
        // advance to the next combination
        let mut i = s;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < m - (s - i) {
                current[i] += 1;
                for j in (i + 1)..s {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn binomial(m: usize, s: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..s {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The regularized projection matrix `P = A_Sᵀ(A_S A_Sᵀ + λI)⁻¹ A_S`, with
/// pseudoinverse semantics for singular Gram matrices at λ = 0.
pub fn projection_matrix(a: &Matrix, set: &[usize], lambda: f64) -> Result<Matrix, OracleError> {
    let a_s = a.select_rows(set);
    let mut gram = Matrix::gemm(&a_s, Transpose::No, &a_s, Transpose::Yes)?;
    gram.add_diagonal(lambda);
    let inv = match CholeskyFactor::new(&gram) {
        Ok(f) if lambda > 0.0 || f.jitter() == 0.0 => {
            // invert via s triangular solve pairs
            let s = set.len();
            let mut inv = Matrix::zeros(s, s);
            for j in 0..s {
                let mut e = Vector::zeros(s);
                e[j] = 1.0;
                let col = f.solve_system(&e)?;
                for i in 0..s {
                    inv[(i, j)] = col[i];
                }
            }
            inv
        }
        _ => pseudo_inverse_sym(&gram)?,
    };
    let tmp = Matrix::gemm(&a_s, Transpose::Yes, &inv, Transpose::No)?;
    Ok(Matrix::gemm(&tmp, Transpose::No, &a_s, Transpose::No)?)
}

fn pseudo_inverse_sym(m: &Matrix) -> Result<Matrix, OracleError> {
    let e = sym_eig(m)?;
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let n = m.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &ev) in e.lambda.iter().enumerate() {
        if ev > RANK_CUTOFF * top {
            let c = 1.0 / ev;
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += c * e.v[(i, k)] * e.v[(j, k)];
                }
            }
        }
    }
    Ok(out)
}

/// Symmetric pseudo square root `M^{½}` or inverse square root `M^{†/2}`.
fn pseudo_power_sym(m: &Matrix, exponent: f64) -> Result<Matrix, OracleError> {
    let e = sym_eig(m)?;
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let n = m.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &ev) in e.lambda.iter().enumerate() {
        if ev > RANK_CUTOFF * top {
            let c = ev.powf(exponent);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += c * e.v[(i, k)] * e.v[(j, k)];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum EnsembleMode {
    Exhaustive,
    MonteCarlo { samples: usize, seed: u64 },
}

/// The collection of per-block projection matrices together with their mean.
#[derive(Debug, Clone)]
pub struct ProjectionEnsemble {
    pub block_size: usize,
    pub lambda: f64,
    pub projections: Vec<Matrix>,
    pub p_bar: Matrix,
}

const ENUMERATION_CAP: u128 = 100_000;

pub fn expected_projection(
    a: &Matrix,
    s: usize,
    lambda: f64,
    mode: EnsembleMode,
) -> Result<ProjectionEnsemble, OracleError> {
    let m = a.rows();
    let n = a.cols();
    let subsets: Vec<Vec<usize>> = match mode {
        EnsembleMode::Exhaustive => {
            let count = binomial(m, s);
            if count > ENUMERATION_CAP {
                return Err(OracleError::TooManySubsets {
                    m,
                    s,
                    count,
                    cap: ENUMERATION_CAP,
                });
            }
            enumerate_subsets(m, s)
        }
        EnsembleMode::MonteCarlo { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..samples).map(|_| sample_subset(m, s, &mut rng)).collect()
        }
    };
    let mut p_bar = Matrix::zeros(n, n);
    let mut projections = Vec::with_capacity(subsets.len());
    for set in &subsets {
        let p = projection_matrix(a, set, lambda)?;
        p_bar.add_assign(&p);
        projections.push(p);
    }
    p_bar.scale(1.0 / subsets.len() as f64);
    Ok(ProjectionEnsemble {
        block_size: s,
        lambda,
        projections,
        p_bar,
    })
}

// ---------------------------------------------------------------------------
// convergence-rate quantities

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub mu: f64,
    pub nu: f64,
    pub rho_bar: f64,
}

/// Smallest positive eigenvalue of the expected projection (μ), the variance
/// proxy ν = λ_max(E[(P̄^{†/2} P P̄^{†/2})²]), and the rate ρ̄ = √(μ/ν).
pub fn mu_nu_rho(ensemble: &ProjectionEnsemble) -> Result<RateReport, OracleError> {
    let e = sym_eig(&ensemble.p_bar)?;
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let mu = e
        .lambda
        .iter()
        .filter(|&&v| v > RANK_CUTOFF * top)
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let half = pseudo_power_sym(&ensemble.p_bar, -0.5)?;
    let n = ensemble.p_bar.rows();
    let mut mean_sq = Matrix::zeros(n, n);
    for p in &ensemble.projections {
        let cp = Matrix::gemm(&half, Transpose::No, p, Transpose::No)?;
        let conj = Matrix::gemm(&cp, Transpose::No, &half, Transpose::No)?;
        let sq = Matrix::gemm(&conj, Transpose::No, &conj, Transpose::No)?;
        mean_sq.add_assign(&sq);
    }
    mean_sq.scale(1.0 / ensemble.projections.len() as f64);
    // symmetrize away enumeration round-off before the eigensolve
    let mut sym = mean_sq.clone();
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (mean_sq[(i, j)] + mean_sq[(j, i)]);
        }
    }
    let nu = sym_eig(&sym)?.lambda.first().copied().unwrap_or(0.0);
    Ok(RateReport {
        mu,
        nu,
        rho_bar: (mu / nu).sqrt(),
    })
}

/// Largest `c` with `P̄ ⪰ c·M` for `M = AᵀA(AᵀA + λ̄I)⁻¹`, computed as the
/// smallest positive eigenvalue of `M^{†/2}·P̄·M^{†/2}`. Fails if the null
/// spaces of `P̄` and `M` disagree.
pub fn psd_lower_coefficient(
    p_bar: &Matrix,
    a: &Matrix,
    lambda_bar: f64,
) -> Result<f64, OracleError> {
    let mut gram = Matrix::gemm(a, Transpose::Yes, a, Transpose::No)?;
    let gram_plain = gram.clone();
    gram.add_diagonal(lambda_bar);
    let inv = pseudo_inverse_sym(&gram)?;
    let m_ref = Matrix::gemm(&gram_plain, Transpose::No, &inv, Transpose::No)?;
    // symmetrize (product of commuting symmetric matrices up to round-off)
    let n = m_ref.rows();
    let mut m_sym = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m_sym[(i, j)] = 0.5 * (m_ref[(i, j)] + m_ref[(j, i)]);
        }
    }
    // null spaces must match: P̄ must vanish on null(M) and vice versa
    let e_m = sym_eig(&m_sym)?;
    let top_m = e_m.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let e_p = sym_eig(p_bar)?;
    let top_p = e_p.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let mut gap = 0.0f64;
    for k in 0..n {
        if e_m.lambda[k] <= RANK_CUTOFF * top_m {
            // null direction of M: P̄ must annihilate it
            let dir = Vector::from((0..n).map(|i| e_m.v[(i, k)]).collect::<Vec<_>>());
            gap = gap.max(p_bar.matvec(&dir)?.norm());
        }
        if e_p.lambda[k] <= RANK_CUTOFF * top_p {
            let dir = Vector::from((0..n).map(|i| e_p.v[(i, k)]).collect::<Vec<_>>());
            gap = gap.max(m_sym.matvec(&dir)?.norm());
        }
    }
    if gap > 1e-8 * top_p.max(top_m).max(1e-300) {
        return Err(OracleError::NullSpaceMismatch(gap));
    }
    let half = pseudo_power_sym(&m_sym, -0.5)?;
    let cp = Matrix::gemm(&half, Transpose::No, p_bar, Transpose::No)?;
    let conj = Matrix::gemm(&cp, Transpose::No, &half, Transpose::No)?;
    let mut conj_sym = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            conj_sym[(i, j)] = 0.5 * (conj[(i, j)] + conj[(j, i)]);
        }
    }
    let e = sym_eig(&conj_sym)?;
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let c = e
        .lambda
        .iter()
        .filter(|&&v| v > RANK_CUTOFF * top)
        .fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(c)
}

/// Fraction of seeded trials in which the average of `B` i.i.d. block
/// projections dominates half the expected projection on its range.
pub fn block_memo_check(
    a: &Matrix,
    s: usize,
    lambda: f64,
    b_blocks: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, OracleError> {
    let ensemble = expected_projection(a, s, lambda, EnsembleMode::Exhaustive)?;
    let n = a.cols();
    // orthonormal basis of range(P̄)
    let e = sym_eig(&ensemble.p_bar)?;
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    let range: Vec<usize> = (0..n)
        .filter(|&k| e.lambda[k] > RANK_CUTOFF * top)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..trials {
        let mut avg = Matrix::zeros(n, n);
        for _ in 0..b_blocks {
            let set = sample_subset(a.rows(), s, &mut rng);
            avg.add_assign(&projection_matrix(a, &set, lambda)?);
        }
        avg.scale(1.0 / b_blocks as f64);
        // D = avg − ½P̄ restricted to range(P̄)
        let mut d = avg;
        let mut half_p = ensemble.p_bar.clone();
        half_p.scale(0.5);
        let d_full = d.sub(&half_p);
        d = d_full;
        let r = range.len();
        let mut restricted = Matrix::zeros(r, r);
        for (ai, &ki) in range.iter().enumerate() {
            for (aj, &kj) in range.iter().enumerate() {
                let mut acc = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        acc += e.v[(p, ki)] * d[(p, q)] * e.v[(q, kj)];
                    }
                }
                restricted[(ai, aj)] = acc;
            }
        }
        let mut restr_sym = restricted.clone();
        for i in 0..r {
            for j in 0..r {
                restr_sym[(i, j)] = 0.5 * (restricted[(i, j)] + restricted[(j, i)]);
            }
        }
        let min_ev = sym_eig(&restr_sym)?.lambda.last().copied().unwrap_or(0.0);
        if min_ev >= -1e-10 {
            successes += 1;
        }
    }
    Ok(successes as f64 / trials as f64)
}

// ---------------------------------------------------------------------------
// determinantal subset distributions

#[derive(Debug, Clone)]
pub struct DppDistribution {
    /// Every subset of `[m]` with its probability.
    pub subsets: Vec<(Vec<usize>, f64)>,
    pub expected_size: f64,
}

fn determinant(m: &Matrix) -> f64 {
    // partial-pivot Gaussian elimination on a copy
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[(r, col)].abs() > a[(piv, col)].abs() {
                piv = r;
            }
        }
        if a[(piv, col)] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            det = -det;
        }
        det *= a[(col, col)];
        for r in (col + 1)..n {
            let f = a[(r, col)] / a[(col, col)];
            if f != 0.0 {
                for j in col..n {
                    a[(r, j)] -= f * a[(col, j)];
                }
            }
        }
    }
    det
}

/// Exact subset distribution with `Pr(S) ∝ det(L_{S,S})` over all `2^m`
/// subsets, plus its expected size (which must match `tr(L(L+I)⁻¹)`).
pub fn dpp_enumerate(l: &Matrix) -> Result<DppDistribution, OracleError> {
    let m = l.rows();
    if m > 12 {
        return Err(OracleError::TooLarge(format!(
            "DPP enumeration capped at 12, got {m}"
        )));
    }
    let e = sym_eig(l)?;
    let min_ev = e.lambda.last().copied().unwrap_or(0.0);
    let top = e.lambda.first().copied().unwrap_or(0.0).max(0.0);
    if min_ev < -1e-10 * top.max(1.0) {
        return Err(OracleError::NotPsd(min_ev));
    }
    let mut subsets = Vec::with_capacity(1usize << m);
    let mut total = 0.0f64;
    for mask in 0u32..(1u32 << m) {
        let set: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let weight = if set.is_empty() {
            1.0
        } else {
            determinant(&l.select_principal(&set)).max(0.0)
        };
        total += weight;
        subsets.push((set, weight));
    }
    let mut expected_size = 0.0;
    for (set, w) in &mut subsets {
        *w /= total;
        expected_size += *w * set.len() as f64;
    }
    Ok(DppDistribution {
        subsets,
        expected_size,
    })
}

/// Closed-form expected DPP size `tr(L(L+I)⁻¹)`.
pub fn dpp_expected_size_formula(l: &Matrix) -> Result<f64, OracleError> {
    let e = sym_eig(l)?;
    Ok(e.lambda.iter().map(|&v| v / (v + 1.0)).sum())
}

/// Checks the determinantal regularization inequality
/// `E[(I + (m/(kλ̄))A_SᵀA_S)⁻¹] ⪯ λ̄(AᵀA + λ̄I)⁻¹` under the size-rebalanced
/// subset distribution, by full enumeration. Returns the smallest eigenvalue
/// of (rhs − lhs); the inequality holds when it is ≥ −slack.
pub fn rdpp_inequality_check(a: &Matrix, k: usize) -> Result<f64, OracleError> {
    let m = a.rows();
    let n = a.cols();
    if m > 10 {
        return Err(OracleError::TooLarge(format!(
            "enumeration capped at 10 rows, got {m}"
        )));
    }
    let svd = crate::linalg::svd(a)?;
    let rank = numerical_rank(&svd.sigma);
    if k >= rank {
        return Err(OracleError::KTooLarge { k, rank });
    }
    let lbar = lambda_bar(&svd.sigma, k);
    // kernel of the rescaled determinantal distribution
    let mut l = Matrix::gemm(a, Transpose::No, a, Transpose::Yes)?;
    l.scale(m as f64 / (lbar * (m - k) as f64));
    l.add_diagonal(k as f64 / (m - k) as f64);
    let dist = dpp_enumerate(&l)?;

    let coeff = m as f64 / (k as f64 * lbar);
    let mut lhs = Matrix::zeros(n, n);
    for (set, p) in &dist.subsets {
        if *p == 0.0 {
            continue;
        }
        let term = if set.is_empty() {
            Matrix::identity(n)
        } else {
            let a_s = a.select_rows(set);
            let mut g = Matrix::gemm(&a_s, Transpose::Yes, &a_s, Transpose::No)?;
            g.scale(coeff);
            g.add_diagonal(1.0);
            invert_spd(&g)?
        };
        let mut term = term;
        term.scale(*p);
        lhs.add_assign(&term);
    }
    let mut gram = Matrix::gemm(a, Transpose::Yes, a, Transpose::No)?;
    gram.add_diagonal(lbar);
    let mut rhs = invert_spd(&gram)?;
    rhs.scale(lbar);
    let diff = rhs.sub(&lhs);
    let mut diff_sym = diff.clone();
    for i in 0..n {
        for j in 0..n {
            diff_sym[(i, j)] = 0.5 * (diff[(i, j)] + diff[(j, i)]);
        }
    }
    Ok(sym_eig(&diff_sym)?.lambda.last().copied().unwrap_or(0.0))
}

fn invert_spd(m: &Matrix) -> Result<Matrix, OracleError> {
    let n = m.rows();
    let f = CholeskyFactor::new(m)?;
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        let col = f.solve_system(&e)?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

// ---------------------------------------------------------------------------
// momentum-form vs three-sequence-form equivalence

#[derive(Debug, Clone)]
pub struct ThreeSequenceTrajectory {
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub v: Vec<Vector>,
}

/// Run the three-sequence form of the accelerated recursion with exact
/// projections over a fixed block sequence:
/// `x_t = αv_t + (1−α)y_t`, `y_{t+1} = x_t − w_t`,
/// `v_{t+1} = βv_t + (1−β)x_t − γw_t`, with `β = 1−ρ`, `γ = 1+η/ρ−η`,
/// `α = ρ/(1+ρ)`.
pub fn three_sequence_run(
    a: &Matrix,
    b: &Vector,
    rho: f64,
    eta: f64,
    lambda: f64,
    x0: &Vector,
    blocks: &[Vec<usize>],
) -> Result<ThreeSequenceTrajectory, OracleError> {
    if rho <= 0.0 {
        return Err(OracleError::Degenerate(
            "rho must be positive (γ is undefined at rho = 0)".to_string(),
        ));
    }
    if (eta - rho).abs() < 1e-14 {
        return Err(OracleError::Degenerate(
            "eta = rho makes γ = 1 and the momentum change of variables singular".to_string(),
        ));
    }
    let beta = 1.0 - rho;
    let gamma = 1.0 + eta / rho - eta;
    let alpha = rho / (1.0 + rho);
    let mut y = x0.clone();
    let mut v = x0.clone();
    let mut traj = ThreeSequenceTrajectory {
        x: Vec::new(),
        y: Vec::new(),
        v: Vec::new(),
    };
    for set in blocks {
        let mut x = v.clone();
        x.scale(alpha);
        x.axpy(1.0 - alpha, &y);
        let b_s = Vector::from(set.iter().map(|&i| b[i]).collect::<Vec<_>>());
        let w = regularized_projection_exact(a, set, &x, &b_s, lambda)?;
        let mut y_next = x.clone();
        y_next.axpy(-1.0, &w);
        let mut v_next = v.clone();
        v_next.scale(beta);
        v_next.axpy(1.0 - beta, &x);
        v_next.axpy(-gamma, &w);
        traj.x.push(x);
        traj.y.push(y_next.clone());
        traj.v.push(v_next.clone());
        y = y_next;
        v = v_next;
    }
    Ok(traj)
}

/// Max deviation between the momentum-form iterates and the three-sequence
/// x-iterates over a shared block sequence.
pub fn momentum_equivalence_deviation(
    a: &Matrix,
    b: &Vector,
    rho: f64,
    eta: f64,
    lambda: f64,
    blocks: &[Vec<usize>],
) -> Result<f64, OracleError> {
    let n = a.cols();
    let x0 = Vector::zeros(n);
    let traj = three_sequence_run(a, b, rho, eta, lambda, &x0, blocks)?;
    let mut x = x0;
    let mut momentum = MomentumState::new(n, rho, eta);
    let mut worst = 0.0f64;
    for (t, set) in blocks.iter().enumerate() {
        // the momentum iterate corresponds to the x-sequence at the same index
        let dev = x.sub(&traj.x[t]).norm();
        worst = worst.max(dev / traj.x[t].norm().max(1.0));
        let b_s = Vector::from(set.iter().map(|&i| b[i]).collect::<Vec<_>>());
        let w = regularized_projection_exact(a, set, &x, &b_s, lambda)?;
        momentum.step(&w, &mut x);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// convergence-rate bound

#[derive(Debug, Clone, Serialize)]
pub struct RateBoundReport {
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub eta: f64,
    /// (t, empirical mean of ‖x_t − x*‖², bound value) at each checkpoint.
    pub checkpoints: Vec<(usize, f64, f64)>,
    /// Largest mean/bound ratio over the checkpoints.
    pub max_ratio: f64,
}

/// Monte Carlo check of the accelerated convergence bound
/// `E‖x_t − x*‖² ≤ 8(1 − ρ/2)ᵗ‖x₀ − x*‖²` with `ρ = ρ̄/2`, `η = 1/(2ν)`,
/// exhaustively computed μ and ν, and fresh uniform blocks each iteration.
pub fn rate_bound_check(
    a: &Matrix,
    b: &Vector,
    s: usize,
    lambda: f64,
    trials: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<RateBoundReport, OracleError> {
    let ensemble = expected_projection(a, s, lambda, EnsembleMode::Exhaustive)?;
    let rate = mu_nu_rho(&ensemble)?;
    let rho = rate.rho_bar / 2.0;
    let eta = 1.0 / (2.0 * rate.nu);
    if eta <= 0.0 || rho <= 0.0 {
        return Err(OracleError::Degenerate(format!(
            "nonpositive parameters rho={rho} eta={eta}"
        )));
    }
    let n = a.cols();
    // min-norm solution through the pseudoinverse
    let svd = crate::linalg::svd(a)?;
    let top = svd.sigma.first().copied().unwrap_or(0.0);
    let mut x_star = Vector::zeros(n);
    for (k, &sv) in svd.sigma.iter().enumerate() {
        if sv > RANK_CUTOFF * top {
            let mut proj = 0.0;
            for i in 0..a.rows() {
                proj += svd.u[(i, k)] * b[i];
            }
            let c = proj / sv;
            for j in 0..n {
                x_star[j] += c * svd.v[(j, k)];
            }
        }
    }
    let horizon = checkpoints.iter().copied().max().unwrap_or(0);
    let x0_err = x_star.norm_sq(); // x₀ = 0
    let mut sums = vec![0.0f64; checkpoints.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut x = Vector::zeros(n);
        let mut momentum = MomentumState::new(n, rho, eta);
        for t in 0..horizon {
            let set = sample_subset(a.rows(), s, &mut rng);
            let b_s = Vector::from(set.iter().map(|&i| b[i]).collect::<Vec<_>>());
            let w = regularized_projection_exact(a, &set, &x, &b_s, lambda)?;
            momentum.step(&w, &mut x);
            if let Some(pos) = checkpoints.iter().position(|&c| c == t + 1) {
                sums[pos] += x.sub(&x_star).norm_sq();
            }
        }
    }
    let mut report_checkpoints = Vec::new();
    let mut max_ratio = 0.0f64;
    for (pos, &t) in checkpoints.iter().enumerate() {
        let mean = sums[pos] / trials as f64;
        let bound = 8.0 * (1.0 - rho / 2.0).powi(t as i32) * x0_err;
        max_ratio = max_ratio.max(mean / bound);
        report_checkpoints.push((t, mean, bound));
    }
    Ok(RateBoundReport {
        mu: rate.mu,
        nu: rate.nu,
        rho,
        eta,
        checkpoints: report_checkpoints,
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(m: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(
            m,
            n,
            (0..m * n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>(),
        )
    }

    #[test]
    fn spectral_summary_diagonal() {
        let a = Matrix::diag(&[10.0, 2.0, 1.0]);
        let s = spectral_summary(&a, &[1], &[0.0]).unwrap();
        let kappa = s.kappa_bar[0].1;
        // tail σ = (2,1): √5 · 1 / √2
        assert!((kappa - (5f64.sqrt() / 2f64.sqrt())).abs() < 1e-10);
        assert!((s.lambda_bar[0].1 - 5.0).abs() < 1e-10);
        assert!((s.effective_dim[0].1 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn effective_dimension_limits() {
        let a = Matrix::diag(&[3.0, 1.0, 0.0]);
        let s = spectral_summary(&a, &[1], &[0.0, 1e18]).unwrap();
        assert!((s.effective_dim[0].1 - 2.0).abs() < 1e-10); // d_0 = rank
        assert!(s.effective_dim[1].1 < 1e-9); // d_∞ → 0
    }

    #[test]
    fn kappa_bounded_by_classical_condition_number() {
        for seed in 0..5 {
            let a = random_matrix(8, 6, seed);
            let s = spectral_summary(&a, &[1, 2], &[]).unwrap();
            let sigma = &s.sigma;
            let min_pos = sigma[sigma.len() - 1];
            for &(k, kappa) in &s.kappa_bar {
                let classical = sigma[k] / min_pos;
                assert!(kappa <= classical + 1e-10, "κ̄ {kappa} > κ {classical}");
            }
        }
    }

    #[test]
    fn subset_enumeration_counts() {
        assert_eq!(enumerate_subsets(4, 2).len(), 6);
        assert_eq!(enumerate_subsets(6, 3).len(), 20);
        assert_eq!(binomial(10, 4), 210);
    }

    #[test]
    fn expected_projection_full_block() {
        let a = random_matrix(4, 4, 2);
        let full = expected_projection(&a, 4, 0.1, EnsembleMode::Exhaustive).unwrap();
        assert_eq!(full.projections.len(), 1);
        let direct = projection_matrix(&a, &[0, 1, 2, 3], 0.1).unwrap();
        assert!(full.p_bar.sub(&direct).frobenius_norm() < 1e-12);
    }

    #[test]
    fn expected_projection_orthogonal_closed_form() {
        let q = random_orthogonal(5, 3);
        let lam = 0.3;
        let e = expected_projection(&q, 5, lam, EnsembleMode::Exhaustive).unwrap();
        let mut expect = Matrix::identity(5);
        expect.scale(1.0 / (1.0 + lam));
        assert!(e.p_bar.sub(&expect).frobenius_norm() < 1e-10);
    }

    #[test]
    fn exhaustive_matches_monte_carlo() {
        let a = random_matrix(4, 3, 5);
        let ex = expected_projection(&a, 2, 0.05, EnsembleMode::Exhaustive).unwrap();
        let mc = expected_projection(
            &a,
            2,
            0.05,
            EnsembleMode::MonteCarlo {
                samples: 100_000,
                seed: 1,
            },
        )
        .unwrap();
        let dev = ex.p_bar.sub(&mc.p_bar).frobenius_norm();
        assert!(dev < 1e-2, "deviation {dev}");
    }

    #[test]
    fn projections_are_contractions() {
        let a = random_matrix(6, 4, 7);
        for lam in [0.0, 0.01, 1.0] {
            let e = expected_projection(&a, 2, lam, EnsembleMode::Exhaustive).unwrap();
            for p in &e.projections {
                let eig = sym_eig(p).unwrap();
                assert!(eig.lambda[0] <= 1.0 + 1e-12);
                assert!(*eig.lambda.last().unwrap() >= -1e-12);
                if lam > 0.0 {
                    assert!(eig.lambda[0] < 1.0);
                }
            }
        }
    }

    #[test]
    fn regularizer_monotone_shrinkage() {
        let a = random_matrix(5, 4, 11);
        let set = [0usize, 2];
        let p_small = projection_matrix(&a, &set, 0.01).unwrap();
        let p_big = projection_matrix(&a, &set, 0.1).unwrap();
        let diff = p_small.sub(&p_big);
        let mut sym = diff.clone();
        for i in 0..4 {
            for j in 0..4 {
                sym[(i, j)] = 0.5 * (diff[(i, j)] + diff[(j, i)]);
            }
        }
        assert!(*sym_eig(&sym).unwrap().lambda.last().unwrap() >= -1e-12);
    }

    #[test]
    fn mu_nu_single_subset_identity() {
        let q = random_orthogonal(4, 9);
        let lam = 0.2;
        let e = expected_projection(&q, 4, lam, EnsembleMode::Exhaustive).unwrap();
        let r = mu_nu_rho(&e).unwrap();
        // P̄ = I/(1+λ), so μ = 1/(1+λ) and the normalized second moment is I
        assert!((r.nu - 1.0).abs() < 1e-10);
        assert!((r.mu - 1.0 / (1.0 + lam)).abs() < 1e-10);
    }

    #[test]
    fn nu_bounds_hold_on_random_instances() {
        let mut checked = 0;
        for seed in 0..25 {
            let m = 4 + (seed as usize % 5);
            let n = 3 + (seed as usize % 3);
            let s = 1 + (seed as usize % 3);
            let a = random_matrix(m, n, 100 + seed);
            let lam = 0.05;
            let e = expected_projection(&a, s, lam, EnsembleMode::Exhaustive).unwrap();
            let r = mu_nu_rho(&e).unwrap();
            assert!(r.nu >= 1.0 - 1e-9, "ν = {} < 1", r.nu);
            assert!(r.nu <= 1.0 / r.mu + 1e-9, "ν = {} > 1/μ = {}", r.nu, 1.0 / r.mu);
            checked += 1;
        }
        assert_eq!(checked, 25);
    }

    #[test]
    fn mu_nu_invariant_under_row_permutation() {
        let a = random_matrix(5, 3, 13);
        let perm: Vec<usize> = vec![4, 2, 0, 3, 1];
        let a_perm = a.select_rows(&perm);
        let e1 = expected_projection(&a, 2, 0.05, EnsembleMode::Exhaustive).unwrap();
        let e2 = expected_projection(&a_perm, 2, 0.05, EnsembleMode::Exhaustive).unwrap();
        let r1 = mu_nu_rho(&e1).unwrap();
        let r2 = mu_nu_rho(&e2).unwrap();
        assert!((r1.mu - r2.mu).abs() < 1e-10);
        assert!((r1.nu - r2.nu).abs() < 1e-10);
    }

    #[test]
    fn psd_lower_coefficient_orthogonal_closed_form() {
        let q = random_orthogonal(4, 15);
        let lam = 0.3;
        let lbar = 0.7;
        let e = expected_projection(&q, 4, lam, EnsembleMode::Exhaustive).unwrap();
        let c = psd_lower_coefficient(&e.p_bar, &q, lbar).unwrap();
        let expect = (1.0 + lbar) / (1.0 + lam);
        assert!((c - expect).abs() < 1e-9, "c = {c}, expect {expect}");
    }

    #[test]
    fn variance_bound_with_measured_coefficient() {
        for seed in 0..10 {
            let m = 5 + (seed as usize % 4);
            let n = 4;
            let s = 2;
            let a = random_matrix(m, n, 300 + seed);
            let svd = crate::linalg::svd(&a).unwrap();
            let k = 1;
            let lbar = lambda_bar(&svd.sigma, k);
            let lam = lbar * s as f64 / m as f64;
            let e = expected_projection(&a, s, lam, EnsembleMode::Exhaustive).unwrap();
            let r = mu_nu_rho(&e).unwrap();
            let c = psd_lower_coefficient(&e.p_bar, &a, lbar).unwrap();
            assert!(c > 0.0);
            let bound = 2.0 * lbar / (c * lam);
            assert!(r.nu <= bound + 1e-9, "ν = {} > {bound}", r.nu);
        }
    }

    #[test]
    fn block_memo_enumeration_mean_dominates() {
        // sanity: using a huge B the average concentrates at P̄ ⪰ ½P̄
        let a = random_matrix(6, 4, 21);
        let rate = block_memo_check(&a, 2, 0.01, 400, 10, 3).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn block_memo_single_block_fails_generically() {
        let a = random_matrix(8, 4, 23);
        let rate = block_memo_check(&a, 2, 0.01, 1, 50, 5).unwrap();
        assert!(rate < 0.5, "rate {rate}");
    }

    #[test]
    fn dpp_identity_two() {
        let d = dpp_enumerate(&Matrix::identity(2)).unwrap();
        assert!((d.expected_size - 1.0).abs() < 1e-12);
        for (set, p) in &d.subsets {
            let _ = set;
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn dpp_zero_kernel() {
        let d = dpp_enumerate(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(d.expected_size, 0.0);
        let empty = d.subsets.iter().find(|(s, _)| s.is_empty()).unwrap();
        assert!((empty.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dpp_expected_size_matches_formula() {
        for seed in 0..5 {
            let g = random_matrix(6, 6, 40 + seed);
            let mut l = Matrix::gemm(&g, Transpose::Yes, &g, Transpose::No).unwrap();
            l.scale(0.25);
            let d = dpp_enumerate(&l).unwrap();
            let formula = dpp_expected_size_formula(&l).unwrap();
            assert!(
                (d.expected_size - formula).abs() < 1e-10,
                "{} vs {formula}",
                d.expected_size
            );
        }
    }

    #[test]
    fn dpp_rejects_non_psd() {
        let l = Matrix::diag(&[1.0, -0.5]);
        assert!(matches!(dpp_enumerate(&l), Err(OracleError::NotPsd(_))));
    }

    #[test]
    fn rdpp_diagonal_example() {
        let a = Matrix::diag(&[2.0, 1.0, 1.0]);
        let min_ev = rdpp_inequality_check(&a, 1).unwrap();
        assert!(min_ev >= -1e-9, "min eigenvalue {min_ev}");
    }

    #[test]
    fn rdpp_rejects_k_at_rank() {
        let a = Matrix::diag(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            rdpp_inequality_check(&a, 1),
            Err(OracleError::KTooLarge { .. })
        ));
    }

    #[test]
    fn rdpp_random_instances() {
        for seed in 0..5 {
            let a = random_matrix(6, 4, 60 + seed);
            for k in [1usize, 2] {
                let min_ev = rdpp_inequality_check(&a, k).unwrap();
                assert!(min_ev >= -1e-9, "seed {seed} k {k}: {min_ev}");
            }
        }
    }

    #[test]
    fn three_sequence_rejects_degenerate() {
        let a = random_matrix(4, 3, 70);
        let b = Vector::zeros(4);
        assert!(three_sequence_run(&a, &b, 0.0, 0.1, 0.0, &Vector::zeros(3), &[]).is_err());
        assert!(three_sequence_run(&a, &b, 0.2, 0.2, 0.0, &Vector::zeros(3), &[]).is_err());
    }

    #[test]
    fn momentum_equivalence_one_step() {
        let a = random_matrix(6, 4, 71);
        let x_plant = Vector::from(vec![1.0, -1.0, 0.5, 2.0]);
        let b = a.matvec(&x_plant).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let blocks = vec![sample_subset(6, 2, &mut rng)];
        let dev = momentum_equivalence_deviation(&a, &b, 0.3, 0.1, 1e-6, &blocks).unwrap();
        assert!(dev <= 1e-14, "deviation {dev}");
    }

    #[test]
    fn momentum_equivalence_long_run() {
        let a = random_matrix(64, 32, 73);
        let x_plant = crate::problems::standard_normal_vector(32, 74);
        let b = a.matvec(&x_plant).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let blocks: Vec<Vec<usize>> = (0..100).map(|_| sample_subset(64, 8, &mut rng)).collect();
        let dev = momentum_equivalence_deviation(&a, &b, 0.2, 0.1, 1e-8, &blocks).unwrap();
        assert!(dev <= 1e-10, "deviation {dev}");
    }

    #[test]
    fn rate_bound_orthogonal_single_step() {
        let q = random_orthogonal(6, 80);
        let x_plant = crate::problems::standard_normal_vector(6, 81);
        let b = q.matvec(&x_plant).unwrap();
        let report = rate_bound_check(&q, &b, 6, 0.0, 5, &[1, 3], 82).unwrap();
        assert!(report.max_ratio <= 1.0 + 1e-9, "ratio {}", report.max_ratio);
    }

    #[test]
    fn rate_bound_small_system() {
        let a = random_matrix(10, 6, 83);
        let x_plant = crate::problems::standard_normal_vector(6, 84);
        let b = a.matvec(&x_plant).unwrap();
        let svd = crate::linalg::svd(&a).unwrap();
        let lam = lambda_bar(&svd.sigma, 1) * 2.0 / 10.0;
        let report = rate_bound_check(&a, &b, 2, lam, 50, &[10, 30], 85).unwrap();
        assert!(report.max_ratio <= 1.2, "ratio {}", report.max_ratio);
    }
}
