//! Fast Hadamard machinery: vector/matrix FHT, a two-sided symmetric variant
//! that exploits symmetry of the input, randomized Hadamard operators, and
//! subsampled Hadamard sketches.
//!
//! All transforms count their arithmetic (additions/subtractions are the only
//! arithmetic an FHT performs) so the solvers can meter preprocessing cost
//! exactly. Dimensions must be powers of two; padding helpers live on
//! [`RhtOperator`].

use crate::linalg::{Matrix, Vector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("sketch width {tau} exceeds padded dimension {padded}")]
    SketchTooWide { tau: usize, padded: usize },
}

fn check_power_of_two(n: usize) -> Result<(), TransformError> {
    if n == 0 || !n.is_power_of_two() {
        return Err(TransformError::NotPowerOfTwo(n));
    }
    Ok(())
}

/// Next power of two at or above `n` (n ≥ 1).
pub fn pad_dimension(n: usize) -> usize {
    n.next_power_of_two()
}

/// In-place Hadamard butterfly on a power-of-two slice. Returns the number of
/// additions performed (`n·log₂ n`).
pub fn fht_in_place(data: &mut [f64]) -> u64 {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut ops = 0u64;
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = data[j];
                let b = data[j + h];
                data[j] = a + b;
                data[j + h] = a - b;
                ops += 2;
            }
            i += 2 * h;
        }
        h *= 2;
    }
    ops
}

/// `H_n · v` for power-of-two `n`, with the block convention
/// `H_n [a; b] = [H(a+b); H(a−b)]`.
pub fn fht(v: &Vector) -> Result<(Vector, u64), TransformError> {
    check_power_of_two(v.len())?;
    let mut out = v.clone();
    let ops = fht_in_place(out.as_mut_slice());
    Ok((out, ops))
}

/// `H · M`: the butterfly applied to every column. Returns the addition count
/// (`cols·rows·log₂ rows`).
pub fn fht_matrix(m: &Matrix) -> Result<(Matrix, u64), TransformError> {
    check_power_of_two(m.rows())?;
    let rows = m.rows();
    let cols = m.cols();
    let mut out = m.clone();
    let mut ops = 0u64;
    let mut col = vec![0.0; rows];
    for j in 0..cols {
        for i in 0..rows {
            col[i] = out[(i, j)];
        }
        ops += fht_in_place(&mut col);
        for i in 0..rows {
            out[(i, j)] = col[i];
        }
    }
    Ok((out, ops))
}

/// Two-sided transform `H · A · H` of a symmetric matrix, computed by a
/// divide-and-conquer that transforms each off-diagonal block only once.
/// Returns the arithmetic-operation count, which stays below
/// `n²(2.5 + log₂ n)`.
pub fn sym_fht(a: &Matrix) -> Result<(Matrix, u64), TransformError> {
    check_power_of_two(a.rows())?;
    if a.rows() != a.cols() {
        return Err(TransformError::DimensionMismatch(format!(
            "{}x{} is not square",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(TransformError::NotSymmetric(asym));
    }
    let mut ops = 0u64;
    let out = sym_fht_recurse(a, &mut ops);
    Ok((out, ops))
}

fn sym_fht_recurse(a: &Matrix, ops: &mut u64) -> Matrix {
    let n = a.rows();
    if n == 1 {
        return a.clone();
    }
    let h = n / 2;
    let mut a11 = Matrix::zeros(h, h);
    let mut a12 = Matrix::zeros(h, h);
    let mut a22 = Matrix::zeros(h, h);
    for i in 0..h {
        for j in 0..h {
            a11[(i, j)] = a[(i, j)];
            a12[(i, j)] = a[(i, j + h)];
            a22[(i, j)] = a[(i + h, j + h)];
        }
    }
    let b11 = sym_fht_recurse(&a11, ops);
    let b22 = sym_fht_recurse(&a22, ops);
    // Off-diagonal block gets a plain two-sided transform: H·A12·H.
    let (ha12, c1) = fht_matrix(&a12).unwrap();
    let (b12t, c2) = fht_matrix(&ha12.transpose()).unwrap();
    let b12 = b12t.transpose();
    *ops += c1 + c2;

    // Combine: result = [[B11+B12+B12ᵀ+B22, B11−B12+B12ᵀ−B22],
    //                    [symmetric,         B11−B12−B12ᵀ+B22]]
    let mut out = Matrix::zeros(n, n);
    for i in 0..h {
        for j in 0..h {
            let c11 = b11[(i, j)] + b12[(j, i)];
            let c12 = b11[(i, j)] - b12[(i, j)];
            let c21 = b12[(i, j)] + b22[(i, j)];
            let c22 = b12[(j, i)] - b22[(i, j)];
            out[(i, j)] = c11 + c21;
            out[(i, j + h)] = c12 + c22;
            out[(i + h, j + h)] = c12 - c22;
            *ops += 7;
        }
    }
    // Mirror the upper triangle so the output is exactly symmetric.
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Random sign diagonal `D` with an implicit `1/√n` scale, the random half of
/// a randomized Hadamard operator.
#[derive(Debug, Clone)]
pub struct SignDiagonal {
    signs: Vec<f64>,
}

impl SignDiagonal {
    pub fn new(n: usize, seed: u64) -> Result<Self, TransformError> {
        check_power_of_two(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..n)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Ok(SignDiagonal { signs })
    }

    /// All-`+1` diagonal, useful for forcing `Q = H/√n` in tests.
    pub fn all_plus(n: usize) -> Result<Self, TransformError> {
        check_power_of_two(n)?;
        Ok(SignDiagonal {
            signs: vec![1.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.signs.len() as f64).sqrt()
    }
}

/// Randomized Hadamard transform `Q = (1/√m₂)·H·D` acting on an `m`-dimensional
/// space zero-padded to the next power of two `m₂`.
#[derive(Debug, Clone)]
pub struct RhtOperator {
    diag: SignDiagonal,
    logical_dim: usize,
    padded_dim: usize,
}

impl RhtOperator {
    pub fn new(m: usize, seed: u64) -> Self {
        let m2 = pad_dimension(m);
        RhtOperator {
            diag: SignDiagonal::new(m2, seed).unwrap(),
            logical_dim: m,
            padded_dim: m2,
        }
    }

    /// Deterministic variant with all-positive signs (test hook).
    pub fn with_all_plus_signs(m: usize) -> Self {
        let m2 = pad_dimension(m);
        RhtOperator {
            diag: SignDiagonal::all_plus(m2).unwrap(),
            logical_dim: m,
            padded_dim: m2,
        }
    }

    pub fn logical_dim(&self) -> usize {
        self.logical_dim
    }

    pub fn padded_dim(&self) -> usize {
        self.padded_dim
    }

    pub fn diagonal(&self) -> &SignDiagonal {
        &self.diag
    }

    fn check_rows(&self, rows: usize) -> Result<(), TransformError> {
        if rows != self.logical_dim && rows != self.padded_dim {
            return Err(TransformError::DimensionMismatch(format!(
                "operator on dim {} (padded {}) applied to {} rows",
                self.logical_dim, self.padded_dim, rows
            )));
        }
        Ok(())
    }

    /// `Q·M`, zero-padding the rows of `M` to the padded dimension first.
    /// Output lives on the padded space. Returns the addition count of the
    /// butterflies (sign flips and scaling are not counted as FHT additions).
    pub fn apply(&self, m: &Matrix) -> Result<(Matrix, u64), TransformError> {
        self.check_rows(m.rows())?;
        let m2 = self.padded_dim;
        let cols = m.cols();
        let mut padded = Matrix::zeros(m2, cols);
        for i in 0..m.rows() {
            for j in 0..cols {
                padded[(i, j)] = self.diag.sign(i) * m[(i, j)];
            }
        }
        let (mut out, ops) = fht_matrix(&padded)?;
        out.scale(self.diag.scale());
        Ok((out, ops))
    }

    /// `Q·v` for a vector.
    pub fn apply_vector(&self, v: &Vector) -> Result<(Vector, u64), TransformError> {
        self.check_rows(v.len())?;
        let m2 = self.padded_dim;
        let mut data = vec![0.0; m2];
        for i in 0..v.len() {
            data[i] = self.diag.sign(i) * v[i];
        }
        let ops = fht_in_place(&mut data);
        let scale = self.diag.scale();
        for x in &mut data {
            *x *= scale;
        }
        Ok((Vector::from(data), ops))
    }

    /// `Qᵀ·M = (1/√m₂)·D·H·M` on the padded space.
    pub fn apply_transpose(&self, m: &Matrix) -> Result<(Matrix, u64), TransformError> {
        if m.rows() != self.padded_dim {
            return Err(TransformError::DimensionMismatch(format!(
                "transpose application expects {} rows, got {}",
                self.padded_dim,
                m.rows()
            )));
        }
        let (mut out, ops) = fht_matrix(m)?;
        let scale = self.diag.scale();
        for i in 0..out.rows() {
            let s = self.diag.sign(i) * scale;
            for v in out.row_mut(i) {
                *v *= s;
            }
        }
        Ok((out, ops))
    }

    /// `Qᵀ·v`; this is the back-rotation that maps a solution of the rotated
    /// system to the original coordinates.
    pub fn apply_transpose_vector(&self, v: &Vector) -> Result<(Vector, u64), TransformError> {
        if v.len() != self.padded_dim {
            return Err(TransformError::DimensionMismatch(format!(
                "transpose application expects length {}, got {}",
                self.padded_dim,
                v.len()
            )));
        }
        let mut data = v.as_slice().to_vec();
        let ops = fht_in_place(&mut data);
        let scale = self.diag.scale();
        for (i, x) in data.iter_mut().enumerate() {
            *x *= self.diag.sign(i) * scale;
        }
        Ok((Vector::from(data), ops))
    }

    /// Two-sided conjugation `Q·A·Qᵀ` of a symmetric matrix already living on
    /// the padded space. Computed as `(1/m₂)·SymFHT(D·A·D)`.
    pub fn apply_two_sided(&self, a: &Matrix) -> Result<(Matrix, u64), TransformError> {
        if a.rows() != self.padded_dim || a.cols() != self.padded_dim {
            return Err(TransformError::DimensionMismatch(format!(
                "two-sided application expects {0}x{0}, got {1}x{2}",
                self.padded_dim,
                a.rows(),
                a.cols()
            )));
        }
        let mut conj = a.clone();
        for i in 0..conj.rows() {
            for j in 0..conj.cols() {
                conj[(i, j)] *= self.diag.sign(i) * self.diag.sign(j);
            }
        }
        let (mut out, ops) = sym_fht(&conj)?;
        out.scale(1.0 / self.padded_dim as f64);
        Ok((out, ops))
    }
}

/// Subsampled randomized Hadamard sketch `Π = √(n/τ)·I_T·Q` on an
/// `n`-dimensional column space.
#[derive(Debug, Clone)]
pub struct SrhtSketch {
    rht: RhtOperator,
    subset: Vec<usize>,
    tau: usize,
}

impl SrhtSketch {
    pub fn new(n: usize, tau: usize, seed: u64) -> Result<Self, TransformError> {
        let n2 = pad_dimension(n);
        if tau > n2 {
            return Err(TransformError::SketchTooWide { tau, padded: n2 });
        }
        let rht = RhtOperator::new(n, seed);
        // Distinct uniform row subset, drawn from a stream separated from the
        // sign stream by a fixed offset.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed_0ff5e7));
        let mut subset: Vec<usize> = sample(&mut rng, n2, tau).into_vec();
        subset.sort_unstable();
        Ok(SrhtSketch { rht, subset, tau })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Test hook: full subset, all-plus signs, so `Â = A·Hᵀ/√n` exactly.
    pub fn full_with_all_plus_signs(n: usize) -> Self {
        let n2 = pad_dimension(n);
        SrhtSketch {
            rht: RhtOperator::with_all_plus_signs(n),
            subset: (0..n2).collect(),
            tau: n2,
        }
    }

    /// `Â = A_S·Πᵀ` for a block of rows `A_S` (s×n). Returns the s×τ sketch
    /// and the FLOPs charged: `s·n₂·log₂ n₂ + s·τ`.
    pub fn apply_right_transpose(&self, a_s: &Matrix) -> Result<(Matrix, u64), TransformError> {
        let n = a_s.cols();
        if n != self.rht.logical_dim() && n != self.rht.padded_dim() {
            return Err(TransformError::DimensionMismatch(format!(
                "sketch on dim {} (padded {}) applied to {} cols",
                self.rht.logical_dim(),
                self.rht.padded_dim(),
                n
            )));
        }
        let s = a_s.rows();
        let n2 = self.rht.padded_dim();
        let d = self.rht.diagonal();
        // A_S·Qᵀ = (1/√n₂)·(A_S·D)·H, computed row-wise since H is symmetric.
        let mut ops = 0u64;
        let mut out = Matrix::zeros(s, self.tau);
        let mut row = vec![0.0; n2];
        let hd_scale = d.scale();
        let pick_scale = (n2 as f64 / self.tau as f64).sqrt();
        for i in 0..s {
            row[..].fill(0.0);
            for j in 0..n {
                row[j] = a_s[(i, j)] * d.sign(j);
            }
            ops += fht_in_place(&mut row);
            for (k, &t) in self.subset.iter().enumerate() {
                out[(i, k)] = row[t] * hd_scale * pick_scale;
                ops += 1;
            }
        }
        Ok((out, ops))
    }
}
