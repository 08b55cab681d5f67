use super::matrix::{Matrix, Vector};
use super::LinalgError;

/// Which triangular system to solve against an upper-triangular factor `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangularSide {
    /// Solve `R x = y` (back substitution).
    Upper,
    /// Solve `Rᵀ x = y` (forward substitution).
    UpperTransposed,
}

/// Upper-triangular Cholesky factor `R` with `RᵀR = M (+ jitter·I)`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    /// Full `dim x dim` storage with zero strict lower part.
    r: Matrix,
    /// Diagonal shift that was actually added to make the factorization succeed.
    jitter: f64,
}

impl CholeskyFactor {
    /// Factor a symmetric positive (semi-)definite matrix.
    ///
    /// If the plain factorization hits a non-positive pivot, retries with a
    /// diagonal shift of `1e-12·trace/n` and then `1e-8·trace/n` before
    /// giving up. The shift used is reported via [`CholeskyFactor::jitter`].
    pub fn new(m: &Matrix) -> Result<Self, LinalgError> {
        m.check_symmetric(1e-10)?;
        let n = m.rows();
        let base = if n == 0 { 0.0 } else { m.trace().abs() / n as f64 };
        let mut last_jitter = 0.0;
        for &mult in &[0.0, 1e-12, 1e-8] {
            let jitter = mult * base;
            last_jitter = jitter;
            if let Some(r) = try_factor(m, jitter) {
                return Ok(CholeskyFactor { dim: n, r, jitter });
            }
        }
        Err(LinalgError::NotPositiveDefinite {
            max_jitter: last_jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factor(&self) -> &Matrix {
        &self.r
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solve `R x = y` or `Rᵀ x = y`.
    pub fn solve(&self, y: &Vector, side: TriangularSide) -> Result<Vector, LinalgError> {
        if y.len() != self.dim {
            return Err(LinalgError::DimensionMismatch(format!(
                "triangular solve: dim {} vs rhs {}",
                self.dim,
                y.len()
            )));
        }
        let n = self.dim;
        let r = &self.r;
        let mut x = y.as_slice().to_vec();
        match side {
            TriangularSide::Upper => {
                for i in (0..n).rev() {
                    let d = r[(i, i)];
                    if d == 0.0 {
                        return Err(LinalgError::ZeroDiagonal(i));
                    }
                    let mut acc = x[i];
                    for j in (i + 1)..n {
                        acc -= r[(i, j)] * x[j];
                    }
                    x[i] = acc / d;
                }
            }
            TriangularSide::UpperTransposed => {
                for i in 0..n {
                    let d = r[(i, i)];
                    if d == 0.0 {
                        return Err(LinalgError::ZeroDiagonal(i));
                    }
                    let mut acc = x[i];
                    for j in 0..i {
                        acc -= r[(j, i)] * x[j];
                    }
                    x[i] = acc / d;
                }
            }
        }
        Ok(Vector::from(x))
    }

    /// Solve `M x = y` for the factored matrix `M = RᵀR`.
    pub fn solve_system(&self, y: &Vector) -> Result<Vector, LinalgError> {
        let z = self.solve(y, TriangularSide::UpperTransposed)?;
        self.solve(&z, TriangularSide::Upper)
    }
}

fn try_factor(m: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = m.rows();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = m[(i, j)];
            if i == j {
                acc += jitter;
            }
            for k in 0..i {
                acc -= r[(k, i)] * r[(k, j)];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                r[(i, i)] = acc.sqrt();
            } else {
                r[(i, j)] = acc / r[(i, i)];
            }
        }
    }
    Some(r)
}
