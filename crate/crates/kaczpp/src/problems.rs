//! Test-problem construction and persistence: synthetic matrices with
//! prescribed bell-shaped spectra, kernel matrices built from tabular data,
//! and a small binary container for systems on disk.

use crate::linalg::{random_orthogonal, CholeskyFactor, LinalgError, Matrix, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"KZPP";
const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("empty input file")]
    EmptyFile,
    #[error("bad magic bytes (expected \"KZPP\")")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads version {expected})")]
    BadVersion { found: u64, expected: u64 },
    #[error("truncated or corrupt problem file: {0}")]
    Corrupt(String),
    #[error("invalid spectrum: effective rank {er} must be below min(m,n) = {limit}")]
    RankTooLarge { er: usize, limit: usize },
    #[error("invalid spectrum: tail strength {0} outside (0,1)")]
    BadTailStrength(f64),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("inconsistent problem: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Whether a system is a general rectangular `Ax = b` or a symmetric positive
/// (semi-)definite `(K + φI)x = b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    General,
    Psd,
}

/// How the problem was built; travels with the problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub generator: String,
    pub params: String,
    pub seed: u64,
}

impl ProblemMetadata {
    pub fn new(generator: &str, params: &str, seed: u64) -> Self {
        ProblemMetadata {
            generator: generator.to_string(),
            params: params.to_string(),
            seed,
        }
    }
}

/// A dense linear system, optionally with a known solution.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub kind: ProblemKind,
    pub a: Matrix,
    pub b: Vector,
    pub x_star: Option<Vector>,
    /// Diagonal shift already included in `a` (PSD kind only; 0 otherwise).
    pub phi: f64,
    pub metadata: ProblemMetadata,
}

impl LinearProblem {
    pub fn new(
        kind: ProblemKind,
        a: Matrix,
        b: Vector,
        x_star: Option<Vector>,
        phi: f64,
        metadata: ProblemMetadata,
    ) -> Result<Self, ProblemError> {
        if a.rows() != b.len() {
            return Err(ProblemError::Inconsistent(format!(
                "A has {} rows but b has length {}",
                a.rows(),
                b.len()
            )));
        }
        if let Some(x) = &x_star {
            if x.len() != a.cols() {
                return Err(ProblemError::Inconsistent(format!(
                    "A has {} cols but x_star has length {}",
                    a.cols(),
                    x.len()
                )));
            }
        }
        if kind == ProblemKind::Psd {
            let asym = a.asymmetry();
            if asym > 1e-10 {
                return Err(ProblemError::NotSymmetric(asym));
            }
        }
        let p = LinearProblem {
            kind,
            a,
            b,
            x_star,
            phi,
            metadata,
        };
        if let Some(x) = &p.x_star {
            let r = p.a.matvec(x)?.sub(&p.b).norm();
            let scale = p.b.norm().max(1e-300);
            if r > 1e-8 * scale {
                return Err(ProblemError::Inconsistent(format!(
                    "claimed solution has relative residual {:e}",
                    r / scale
                )));
            }
        }
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// Solve the system directly (dense factorization) and attach the result
    /// as the known solution. Intended for modest sizes where a cubic solve is
    /// cheap; general systems get the minimum-norm least-squares solution.
    pub fn attach_direct_solution(&mut self) -> Result<(), ProblemError> {
        let x = self.direct_solution()?;
        self.x_star = Some(x);
        Ok(())
    }

    /// Dense direct solve without mutating the problem.
    pub fn direct_solution(&self) -> Result<Vector, ProblemError> {
        match self.kind {
            ProblemKind::Psd => {
                let f = CholeskyFactor::new(&self.a)?;
                Ok(f.solve_system(&self.b)?)
            }
            ProblemKind::General => {
                let s = crate::linalg::svd(&self.a)?;
                // minimum-norm least squares via the pseudoinverse
                let cutoff = s.sigma.first().copied().unwrap_or(0.0) * 1e-12;
                let mut coeff = vec![0.0; s.sigma.len()];
                for (k, &sv) in s.sigma.iter().enumerate() {
                    if sv > cutoff {
                        let mut acc = 0.0;
                        for i in 0..self.a.rows() {
                            acc += s.u[(i, k)] * self.b[i];
                        }
                        coeff[k] = acc / sv;
                    }
                }
                let mut x = vec![0.0; self.a.cols()];
                for (k, &c) in coeff.iter().enumerate() {
                    if c != 0.0 {
                        for (j, xj) in x.iter_mut().enumerate() {
                            *xj += c * s.v[(j, k)];
                        }
                    }
                }
                Ok(Vector::from(x))
            }
        }
    }
}

/// Prescription for a bell-shaped singular value profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub effective_rank: usize,
    pub tail_strength: f64,
}

impl SpectrumSpec {
    /// The i-th singular value (0-indexed): a Gaussian head of width
    /// `effective_rank` plus a slowly decaying exponential tail.
    pub fn singular_value(&self, i: usize) -> f64 {
        let er = self.effective_rank as f64;
        let x = i as f64 / er;
        (1.0 - self.tail_strength) * (-x * x).exp() + self.tail_strength * (-0.1 * x).exp()
    }

    fn validate(&self, m: usize, n: usize) -> Result<(), ProblemError> {
        let limit = m.min(n);
        if self.effective_rank >= limit {
            return Err(ProblemError::RankTooLarge {
                er: self.effective_rank,
                limit,
            });
        }
        if !(self.tail_strength > 0.0 && self.tail_strength < 1.0) {
            return Err(ProblemError::BadTailStrength(self.tail_strength));
        }
        Ok(())
    }
}

/// Kernel function families for building similarity matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Gaussian,
    Laplacian,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: KernelKind,
    pub gamma: f64,
}

impl KernelSpec {
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> f64 {
        let dist_sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self.kernel {
            KernelKind::Gaussian => (-self.gamma * dist_sq).exp(),
            KernelKind::Laplacian => (-self.gamma * dist_sq.sqrt()).exp(),
        }
    }
}

/// `m×n` matrix with singular values following `spec` and random orthogonal
/// singular vectors. Deterministic per seed.
pub fn make_low_rank(
    m: usize,
    n: usize,
    spec: &SpectrumSpec,
    seed: u64,
) -> Result<Matrix, ProblemError> {
    spec.validate(m, n)?;
    let k = m.min(n);
    let u = random_orthogonal(m, seed);
    let v = random_orthogonal(n, seed.wrapping_add(1));
    // A = Σ_i σ_i u_i v_iᵀ over the leading k vectors.
    let mut a = Matrix::zeros(m, n);
    for idx in 0..k {
        let s = spec.singular_value(idx);
        for i in 0..m {
            let us = u[(i, idx)] * s;
            for j in 0..n {
                a[(i, j)] += us * v[(j, idx)];
            }
        }
    }
    Ok(a)
}

/// Symmetric kernel matrix over the rows of `data`; each pair is evaluated
/// once so symmetry is exact.
pub fn kernel_matrix(data: &Matrix, spec: &KernelSpec) -> Matrix {
    let n = data.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = spec.evaluate(data.row(i), data.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// PSD system `(K + φI)x = b` with a standard-normal right-hand side.
pub fn psd_problem(
    k: &Matrix,
    phi: f64,
    rhs_seed: u64,
    metadata: ProblemMetadata,
) -> Result<LinearProblem, ProblemError> {
    let asym = k.asymmetry();
    if asym > 1e-10 {
        return Err(ProblemError::NotSymmetric(asym));
    }
    let mut a = k.clone();
    a.add_diagonal(phi);
    let b = standard_normal_vector(k.rows(), rhs_seed);
    LinearProblem::new(ProblemKind::Psd, a, b, None, phi, metadata)
}

pub fn standard_normal_vector(n: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector::from(
        (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>(),
    )
}

/// Numeric CSV reader. The first row is treated as a header and skipped when
/// any of its cells fails to parse as a number.
pub fn load_csv(path: &Path, row_limit: Option<usize>) -> Result<Matrix, ProblemError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, row_limit)
}

pub fn parse_csv(text: &str, row_limit: Option<usize>) -> Result<Matrix, ProblemError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let first = match lines.peek() {
        Some((_, l)) => *l,
        None => return Err(ProblemError::EmptyFile),
    };
    let header = first
        .split(',')
        .all(|cell| cell.trim().parse::<f64>().is_err());
    if header {
        lines.next();
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_idx, line) in lines {
        if let Some(limit) = row_limit {
            if rows.len() >= limit {
                break;
            }
        }
        let mut row = Vec::new();
        for (col_idx, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| ProblemError::Parse {
                row: line_idx + 1,
                col: col_idx + 1,
                message: format!("cannot parse {:?} as a number", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(ProblemError::Parse {
                    row: line_idx + 1,
                    col: col_idx + 1,
                    message: "non-finite value".to_string(),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(ProblemError::Parse {
                    row: line_idx + 1,
                    col: row.len(),
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ProblemError::EmptyFile);
    }
    Ok(Matrix::from_rows(&rows))
}

/// Binary container: magic "KZPP", then version, kind, row count, column
/// count as little-endian 64-bit integers, the shift φ, the entries of A
/// (row-major) and b as little-endian 64-bit floats, a solution flag with
/// optional data, and a length-prefixed UTF-8 metadata blob.
pub fn save_problem(path: &Path, p: &LinearProblem) -> Result<(), ProblemError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u64(&mut w, FORMAT_VERSION)?;
    write_u64(&mut w, match p.kind {
        ProblemKind::General => 0,
        ProblemKind::Psd => 1,
    })?;
    write_u64(&mut w, p.a.rows() as u64)?;
    write_u64(&mut w, p.a.cols() as u64)?;
    w.write_all(&p.phi.to_le_bytes())?;
    for &v in p.a.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in p.b.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    match &p.x_star {
        None => write_u64(&mut w, 0)?,
        Some(x) => {
            write_u64(&mut w, 1)?;
            for &v in x.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    let meta = serde_json::to_string(&p.metadata)
        .map_err(|e| ProblemError::Corrupt(format!("metadata serialization: {e}")))?;
    write_u64(&mut w, meta.len() as u64)?;
    w.write_all(meta.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_problem(path: &Path) -> Result<LinearProblem, ProblemError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(ProblemError::BadMagic);
    }
    let version = read_u64(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(ProblemError::BadVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = match read_u64(&mut r)? {
        0 => ProblemKind::General,
        1 => ProblemKind::Psd,
        k => return Err(ProblemError::Corrupt(format!("unknown problem kind {k}"))),
    };
    let m = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    if m.checked_mul(n).is_none() || m * n > (1usize << 32) {
        return Err(ProblemError::Corrupt(format!("implausible dims {m}x{n}")));
    }
    let phi = read_f64(&mut r)?;
    let mut a_data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        a_data.push(read_f64(&mut r)?);
    }
    let a = Matrix::from_vec(m, n, a_data);
    let mut b_data = Vec::with_capacity(m);
    for _ in 0..m {
        b_data.push(read_f64(&mut r)?);
    }
    let x_star = match read_u64(&mut r)? {
        0 => None,
        1 => {
            let mut x = Vec::with_capacity(n);
            for _ in 0..n {
                x.push(read_f64(&mut r)?);
            }
            Some(Vector::from(x))
        }
        f => return Err(ProblemError::Corrupt(format!("bad solution flag {f}"))),
    };
    let meta_len = read_u64(&mut r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    read_exact(&mut r, &mut meta_bytes)?;
    let meta_str = String::from_utf8(meta_bytes)
        .map_err(|e| ProblemError::Corrupt(format!("metadata not UTF-8: {e}")))?;
    let metadata: ProblemMetadata = serde_json::from_str(&meta_str)
        .map_err(|e| ProblemError::Corrupt(format!("metadata parse: {e}")))?;
    LinearProblem::new(kind, a, Vector::from(b_data), x_star, phi, metadata)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ProblemError> {
    r.read_exact(buf)
        .map_err(|_| ProblemError::Corrupt("unexpected end of file".to_string()))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ProblemError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, ProblemError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
