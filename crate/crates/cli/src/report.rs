//! JSON payloads, one per verb.

use moulton_core::fourbody::{FourBodyFamily, FourBodyLimit};
use moulton_core::monodromy::Factor;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcReport {
    /// Normalized masses.
    pub masses: Vec<f64>,
    pub positions: Vec<f64>,
    pub mu: f64,
    pub max_cc_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetasReport {
    pub mu: f64,
    pub betas: Vec<f64>,
    /// Eigenvalues of `D`, descending.
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyReport {
    pub beta: f64,
    pub e: f64,
    pub tol: f64,
    /// `[re, im]` pairs sorted by decreasing modulus.
    pub multipliers: Vec<Complex64>,
    pub pattern: String,
    pub factors: Vec<Factor>,
    pub symplectic_residual: f64,
    pub segment_symplectic_residual: f64,
    pub det: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourBodyReport {
    pub family: FourBodyFamily,
    pub limit: FourBodyLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub out: String,
    pub cells: usize,
    pub failed: usize,
}
