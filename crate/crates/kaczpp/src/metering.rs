//! FLOP accounting and convergence traces.
//!
//! Solvers charge a [`FlopCounter`] per kernel call using fixed per-call
//! formulas (matrix-vector `2sn`, triangular solve `s²`, Cholesky `s³/3`, FHT
//! `n·log₂n`, two-sided symmetric FHT per its internal counter). Diagnostics
//! such as true-residual evaluation go to the `Instrumentation` category,
//! which never enters the headline total: the solvers being measured do not
//! perform that work.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeterError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("negative charge amount")]
    NegativeCharge,
    #[error("empty trace cannot be exported")]
    EmptyTrace,
    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlopCategory {
    Transform,
    Factorization,
    Projection,
    InnerSolver,
    Instrumentation,
}

pub const CATEGORIES: [FlopCategory; 5] = [
    FlopCategory::Transform,
    FlopCategory::Factorization,
    FlopCategory::Projection,
    FlopCategory::InnerSolver,
    FlopCategory::Instrumentation,
];

/// Monotone FLOP meter with per-category subtotals. Instrumentation charges
/// accumulate in their subtotal but are excluded from [`FlopCounter::headline`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlopCounter {
    headline: u64,
    transform: u64,
    factorization: u64,
    projection: u64,
    inner_solver: u64,
    instrumentation: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        FlopCounter::default()
    }

    pub fn charge(&mut self, category: FlopCategory, amount: u64) {
        match category {
            FlopCategory::Transform => self.transform += amount,
            FlopCategory::Factorization => self.factorization += amount,
            FlopCategory::Projection => self.projection += amount,
            FlopCategory::InnerSolver => self.inner_solver += amount,
            FlopCategory::Instrumentation => {
                self.instrumentation += amount;
                return;
            }
        }
        self.headline += amount;
    }

    /// Total of all categories except instrumentation.
    pub fn headline(&self) -> u64 {
        self.headline
    }

    pub fn subtotal(&self, category: FlopCategory) -> u64 {
        match category {
            FlopCategory::Transform => self.transform,
            FlopCategory::Factorization => self.factorization,
            FlopCategory::Projection => self.projection,
            FlopCategory::InnerSolver => self.inner_solver,
            FlopCategory::Instrumentation => self.instrumentation,
        }
    }
}

/// Per-iteration conjugate gradient cost model: `2n² + 11n`.
pub fn model_cg_iteration(n: u64) -> u64 {
    2 * n * n + 11 * n
}

/// Total cost model for T iterations of full-memory GMRES:
/// `2n²T + 4nT(T+1)`.
pub fn model_gmres_total(n: u64, t: u64) -> u64 {
    2 * n * n * t + 4 * n * t * (t + 1)
}

/// Dense Cholesky cost model: `⌈s³/3⌉`.
pub fn model_cholesky(s: u64) -> u64 {
    (s * s * s).div_ceil(3)
}

/// True-residual evaluation cost (`‖Ax − b‖/‖b‖` for an m×n system),
/// charged to instrumentation.
pub fn model_true_residual(m: u64, n: u64) -> u64 {
    2 * m * n + 3 * m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub flops: u64,
    pub residual_estimate: f64,
    pub residual_true: Option<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    Budget,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub solver: String,
    pub config: serde_json::Value,
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.iteration > last.iteration,
                "iterations must be strictly increasing"
            );
        }
        self.records.push(record);
    }

    pub fn to_csv(&self) -> Result<String, MeterError> {
        if self.records.is_empty() {
            return Err(MeterError::EmptyTrace);
        }
        let mut out = String::from("iter,flops,res_est,res_true,rho\n");
        for r in &self.records {
            let true_field = match r.residual_true {
                Some(v) => format!("{v:e}"),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{:e},{},{:e}\n",
                r.iteration, r.flops, r.residual_estimate, true_field, r.rho
            ));
        }
        Ok(out)
    }

    pub fn export_csv(&self, path: &Path) -> Result<(), MeterError> {
        let csv = self.to_csv()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(csv.as_bytes())?;
        Ok(())
    }

    pub fn export_json(&self, path: &Path) -> Result<(), MeterError> {
        if self.records.is_empty() {
            return Err(MeterError::EmptyTrace);
        }
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
