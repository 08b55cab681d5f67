//! One-sided Jacobi SVD and a classical two-sided Jacobi eigensolver.
//!
//! Accurate and simple at desk scale; neither routine is tuned for speed.

use super::matrix::{dot, Matrix, Transpose};
use super::LinalgError;

const MAX_SWEEPS: usize = 60;

/// Result of [`svd`]: `M = U · diag(sigma) · Vᵀ` with singular values sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

/// Result of [`sym_eig`]: `M = V · diag(lambda) · Vᵀ` with eigenvalues sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub lambda: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, &s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        Matrix::gemm(&us, Transpose::No, &self.v, Transpose::Yes).unwrap()
    }
}

/// One-sided Jacobi SVD. Handles any dense matrix; for wide inputs the
/// transpose is factored and the roles of U and V are swapped back.
pub fn svd(m: &Matrix) -> Result<Svd, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite("svd input"));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let rows = m.rows();
    let cols = m.cols();
    // Work on columns of a copy of M; rotations orthogonalize column pairs.
    let mut a = m.transpose(); // a.row(j) is column j of M
    let mut v = Matrix::identity(cols);
    let scale = m.frobenius_norm();
    let tol = if scale == 0.0 { 0.0 } else { 1e-15 * scale * scale };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (ap, aq) = (a.row(p), a.row(q));
                let app = dot(ap, ap);
                let aqq = dot(aq, aq);
                let apq = dot(ap, aq);
                if apq.abs() <= tol.max(1e-15 * (app * aqq).sqrt()) {
                    continue;
                }
                rotated = true;
                // Jacobi rotation zeroing the (p,q) entry of AᵀA.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(MAX_SWEEPS));
    }

    // Column norms are the singular values; normalized columns form U.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| dot(a.row(j), a.row(j)).sqrt()).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut u = Matrix::zeros(rows, cols);
    let mut vv = Matrix::zeros(cols, cols);
    let mut sigma = Vec::with_capacity(cols);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > 0.0 {
            for i in 0..rows {
                u[(i, k)] = a.row(j)[i] / s;
            }
        }
        for i in 0..cols {
            vv[(i, k)] = v.row(j)[i];
        }
    }
    fill_null_columns(&mut u, &sigma);
    Ok(Svd { u, sigma, v: vv })
}

/// Classical Jacobi eigensolver for symmetric matrices.
pub fn sym_eig(m: &Matrix) -> Result<SymEig, LinalgError> {
    m.check_symmetric(1e-8)?;
    let n = m.rows();
    let mut a = m.clone();
    // Enforce exact symmetry so sweeps stay symmetric.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let tol = 1e-14 * scale.max(1e-300);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // A ← JᵀAJ for the (p,q) rotation J.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
    let mut lambda = Vec::with_capacity(n);
    let mut vv = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        lambda.push(a[(j, j)]);
        for i in 0..n {
            vv[(i, k)] = v[(i, j)];
        }
    }
    Ok(SymEig { lambda, v: vv })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    for k in 0..cols {
        let mp = m[(p, k)];
        let mq = m[(q, k)];
        m[(p, k)] = c * mp - s * mq;
        m[(q, k)] = s * mp + c * mq;
    }
}

/// Replace columns with zero singular value by an orthonormal completion so U
/// always has orthonormal columns.
fn fill_null_columns(u: &mut Matrix, sigma: &[f64]) {
    let rows = u.rows();
    let cols = u.cols();
    for k in 0..cols {
        if sigma[k] > 0.0 {
            continue;
        }
        // Gram–Schmidt a standard basis vector against the existing columns.
        'basis: for e in 0..rows {
            let mut col = vec![0.0; rows];
            col[e] = 1.0;
            for j in 0..cols {
                if j == k || (sigma[j] == 0.0 && j > k) {
                    continue;
                }
                let proj: f64 = (0..rows).map(|i| u[(i, j)] * col[i]).sum();
                for i in 0..rows {
                    col[i] -= proj * u[(i, j)];
                }
            }
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for i in 0..rows {
                    u[(i, k)] = col[i] / norm;
                }
                break 'basis;
            }
        }
    }
}
