//! Reference Krylov solvers: conjugate gradient, full-memory GMRES, and an
//! LSQR engine over implicit operators.
//!
//! CG and GMRES report FLOPs through the closed-form cost models in
//! [`crate::metering`] so comparisons against the instrumented block solvers
//! match the usual accounting for library implementations. CG is deliberately
//! unpreconditioned.

use crate::linalg::{Matrix, Vector};
use crate::metering::{
    model_cg_iteration, model_gmres_total, ConvergenceTrace, SolveStatus, TraceRecord,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("conjugate gradient breakdown: pᵀAp = {0:e} ≤ 0 (matrix not positive definite)")]
    CgBreakdown(f64),
}

#[derive(Debug, Clone)]
pub struct KrylovConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// GMRES restart length; `None` keeps the full basis.
    pub restart: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            tolerance: 1e-8,
            max_iterations: 1000,
            restart: None,
        }
    }
}

/// Implicit matrix: forward and transpose products only.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, v: &Vector) -> Vector;
    fn apply_transpose(&self, u: &Vector) -> Vector;
}

impl LinearOperator for Matrix {
    fn rows(&self) -> usize {
        Matrix::rows(self)
    }
    fn cols(&self) -> usize {
        Matrix::cols(self)
    }
    fn apply(&self, v: &Vector) -> Vector {
        self.matvec(v).expect("operator dimension mismatch")
    }
    fn apply_transpose(&self, u: &Vector) -> Vector {
        self.matvec_transpose(u).expect("operator dimension mismatch")
    }
}

/// Unpreconditioned conjugate gradient for symmetric positive definite
/// systems, with per-iteration FLOPs from the closed-form model.
pub fn cg_solve(
    a: &Matrix,
    b: &Vector,
    config: &KrylovConfig,
) -> Result<(Vector, ConvergenceTrace), BaselineError> {
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(BaselineError::DimensionMismatch(format!(
            "cg: {}x{} with rhs {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let n = a.rows();
    let b_norm = b.norm().max(1e-300);
    let mut x = Vector::zeros(n);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = r.norm_sq();
    let mut trace = ConvergenceTrace {
        solver: "cg".to_string(),
        config: serde_json::json!({
            "tolerance": config.tolerance,
            "max_iterations": config.max_iterations,
        }),
        records: Vec::new(),
        status: SolveStatus::Budget,
    };
    let per_iter = model_cg_iteration(n as u64);
    for it in 1..=config.max_iterations {
        let ap = a.apply(&p);
        let p_ap = p.dot(&ap);
        if rs_old.sqrt() / b_norm > config.tolerance && p_ap <= 0.0 {
            trace.status = SolveStatus::Error;
            return Err(BaselineError::CgBreakdown(p_ap));
        }
        if p_ap != 0.0 {
            let alpha = rs_old / p_ap;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
        }
        let rs_new = r.norm_sq();
        let rel = rs_new.sqrt() / b_norm;
        trace.push(TraceRecord {
            iteration: it as u64,
            flops: per_iter * it as u64,
            residual_estimate: rel,
            residual_true: Some(rel),
            rho: 0.0,
        });
        if rel <= config.tolerance {
            trace.status = SolveStatus::Converged;
            break;
        }
        let beta = rs_new / rs_old;
        let mut p_next = r.clone();
        p_next.axpy(beta, &p);
        p = p_next;
        rs_old = rs_new;
    }
    Ok((x, trace))
}

/// Full-memory GMRES: modified Gram–Schmidt Arnoldi with Givens rotations on
/// the Hessenberg system; no restarting unless requested. FLOPs follow the
/// closed-form model at each basis size.
pub fn gmres_solve(
    a: &Matrix,
    b: &Vector,
    config: &KrylovConfig,
) -> Result<(Vector, ConvergenceTrace), BaselineError> {
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(BaselineError::DimensionMismatch(format!(
            "gmres: {}x{} with rhs {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let n = a.rows();
    let b_norm = b.norm().max(1e-300);
    let mut trace = ConvergenceTrace {
        solver: "gmres".to_string(),
        config: serde_json::json!({
            "tolerance": config.tolerance,
            "max_iterations": config.max_iterations,
            "restart": config.restart,
        }),
        records: Vec::new(),
        status: SolveStatus::Budget,
    };
    let mut x = Vector::zeros(n);
    let mut total_inner = 0u64;
    'outer: loop {
        let r0 = b.sub(&a.apply(&x));
        let beta = r0.norm();
        if beta / b_norm <= config.tolerance {
            trace.status = SolveStatus::Converged;
            break;
        }
        let cycle_cap = config.restart.unwrap_or(config.max_iterations).min(
            config.max_iterations - total_inner as usize,
        );
        if cycle_cap == 0 {
            break;
        }
        // Arnoldi basis as rows of a growing list of vectors.
        let mut basis: Vec<Vector> = Vec::with_capacity(cycle_cap + 1);
        let mut first = r0.clone();
        first.scale(1.0 / beta);
        basis.push(first);
        // Upper-Hessenberg columns after Givens rotations, plus the rotations.
        let mut h_cols: Vec<Vec<f64>> = Vec::new();
        let mut givens: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta]; // rotated rhs
        let mut k = 0;
        while k < cycle_cap {
            let mut w = a.apply(&basis[k]);
            let mut h = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hik = w.dot(v);
                h[i] = hik;
                w.axpy(-hik, v);
            }
            let h_next = w.norm();
            h[k + 1] = h_next;
            // apply accumulated rotations to the new column
            for (i, &(c, s)) in givens.iter().enumerate() {
                let tmp = c * h[i] + s * h[i + 1];
                h[i + 1] = -s * h[i] + c * h[i + 1];
                h[i] = tmp;
            }
            // new rotation annihilating h[k+1]
            let denom = (h[k] * h[k] + h[k + 1] * h[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            h[k] = denom;
            h[k + 1] = 0.0;
            givens.push((c, s));
            g.push(-s * g[k]);
            g[k] *= c;
            h_cols.push(h);
            total_inner += 1;
            let rel = g[k + 1].abs() / b_norm;
            trace.push(TraceRecord {
                iteration: total_inner,
                flops: model_gmres_total(n as u64, total_inner),
                residual_estimate: rel,
                residual_true: Some(rel),
                rho: 0.0,
            });
            let happy = h_next == 0.0;
            if rel <= config.tolerance || happy {
                update_gmres_solution(&mut x, &basis, &h_cols, &g, k + 1);
                trace.status = SolveStatus::Converged;
                break 'outer;
            }
            let mut next = w;
            next.scale(1.0 / h_next);
            basis.push(next);
            k += 1;
            if total_inner as usize >= config.max_iterations {
                update_gmres_solution(&mut x, &basis, &h_cols, &g, k);
                break 'outer;
            }
        }
        update_gmres_solution(&mut x, &basis, &h_cols, &g, k);
        if config.restart.is_none() {
            break;
        }
    }
    Ok((x, trace))
}

fn update_gmres_solution(
    x: &mut Vector,
    basis: &[Vector],
    h_cols: &[Vec<f64>],
    g: &[f64],
    k: usize,
) {
    if k == 0 {
        return;
    }
    // back-substitute the k×k triangular system formed by the rotated columns
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in (i + 1)..k {
            acc -= h_cols[j][i] * y[j];
        }
        y[i] = acc / h_cols[i][i];
    }
    for (j, &yj) in y.iter().enumerate() {
        x.axpy(yj, &basis[j]);
    }
}

/// Paige–Saunders LSQR from a zero initial iterate, run for exactly the
/// requested number of iterations. Returns the zero vector when `b = 0`.
pub fn lsqr_solve<O: LinearOperator>(op: &O, b: &Vector, iterations: usize) -> Vector {
    let n = op.cols();
    let mut x = Vector::zeros(n);
    let beta0 = b.norm();
    if beta0 == 0.0 {
        return x;
    }
    let mut u = b.clone();
    u.scale(1.0 / beta0);
    let mut v = op.apply_transpose(&u);
    let mut alpha = v.norm();
    if alpha == 0.0 {
        return x;
    }
    v.scale(1.0 / alpha);
    let mut w = v.clone();
    let mut phi_bar = beta0;
    let mut rho_bar = alpha;
    for _ in 0..iterations {
        // bidiagonalization step
        let mut u_next = op.apply(&v);
        u_next.axpy(-alpha, &u);
        let beta = u_next.norm();
        if beta > 0.0 {
            u_next.scale(1.0 / beta);
            u = u_next;
            let mut v_next = op.apply_transpose(&u);
            v_next.axpy(-beta, &v);
            alpha = v_next.norm();
            if alpha > 0.0 {
                v_next.scale(1.0 / alpha);
                v = v_next;
            }
        } else {
            // breakdown: rhs fully explained by the current subspace
            let rho = rho_bar.abs().max(1e-300);
            let phi = phi_bar * (rho_bar / rho);
            x.axpy(phi / rho, &w);
            break;
        }
        // orthogonal transformation eliminating beta
        let rho = (rho_bar * rho_bar + beta * beta).sqrt();
        let c = rho_bar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rho_bar = -c * alpha;
        let phi = c * phi_bar;
        phi_bar *= s;
        x.axpy(phi / rho, &w);
        let mut w_next = v.clone();
        w_next.axpy(-theta / rho, &w);
        w = w_next;
    }
    x
}
