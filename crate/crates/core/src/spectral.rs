//! Reduction spectrum of a collinear central configuration.
//!
//! `B` is half the Hessian of the potential at the configuration and
//! `D = mu I + M^{-1} B`. `D` has a simple eigenvalue `mu` (eigenvector
//! `(1, ..., 1)`), an eigenvalue `0` (eigenvector `a`) and `n - 2`
//! non-positive eigenvalues `lambda_3 >= ... >= lambda_n`, which define the
//! mass parameters `beta_i = -lambda_{i+2} / mu`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cc_core::CollinearConfig;
use crate::error::{Error, Result};

/// Symmetric `n x n` matrix `B` with `B_ij = m_i m_j / |a_i - a_j|^3` off
/// the diagonal and zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianB(pub DMatrix<f64>);

impl HessianB {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn hessian_b(config: &CollinearConfig) -> HessianB {
    let n = config.n();
    let m = config.masses.as_slice();
    let a = &config.positions;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = m[i] * m[j] / (a[i] - a[j]).abs().powi(3);
                b[(i, j)] = v;
                b[(i, i)] -= v;
            }
        }
    }
    HessianB(b)
}

/// `D` and its symmetrization `D~ = M^{1/2} D M^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionMatrices {
    pub d: DMatrix<f64>,
    pub d_sym: DMatrix<f64>,
}

pub fn reduction_matrix_d(config: &CollinearConfig) -> ReductionMatrices {
    let n = config.n();
    let m = config.masses.as_slice();
    let b = hessian_b(config).0;
    let mut d = DMatrix::identity(n, n) * config.mu;
    let mut d_sym = d.clone();
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] += b[(i, j)] / m[i];
            d_sym[(i, j)] += b[(i, j)] / (m[i] * m[j]).sqrt();
        }
    }
    ReductionMatrices { d, d_sym }
}

/// Eigenvalues of `D` (descending), `M`-orthonormal eigenvectors and the
/// mass parameters `beta_1 <= ... <= beta_{n-2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpectrum {
    pub lambdas: Vec<f64>,
    /// `eigenvectors[k]` is `v_{k+1}`; `eigenvectors[k][i]` is `b_{i,k+1}`.
    pub eigenvectors: Vec<Vec<f64>>,
    pub betas: Vec<f64>,
    pub mu: f64,
}

impl ReductionSpectrum {
    /// Eigenvectors as the columns of an `n x n` matrix.
    pub fn eigenvector_matrix(&self) -> DMatrix<f64> {
        let n = self.lambdas.len();
        DMatrix::from_fn(n, n, |i, k| self.eigenvectors[k][i])
    }
}

const SNAP_TOL: f64 = 1e-8;

/// Diagonalizes the symmetric `D~` and maps eigenvectors back by
/// `v = M^{-1/2} v~`.
pub fn spectrum_and_betas(config: &CollinearConfig) -> Result<ReductionSpectrum> {
    let n = config.n();
    let mu = config.mu;
    let m = config.masses.as_slice();
    let ReductionMatrices { d_sym, .. } = reduction_matrix_d(config);
    let eig = SymmetricEigen::new(d_sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut lambdas: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if lambdas.iter().any(|l| !l.is_finite()) || !(mu.is_finite() && mu > 0.0) {
        return Err(Error::SpectralDegeneracy(format!("non-finite spectrum, mu = {mu:e}")));
    }

    if (lambdas[0] - mu).abs() > SNAP_TOL * mu.max(1.0) {
        return Err(Error::SpectralDegeneracy(format!("largest eigenvalue {} differs from mu = {mu}", lambdas[0])));
    }
    if lambdas[0] - lambdas[1] <= SNAP_TOL {
        return Err(Error::SpectralDegeneracy(format!("lambda_1 - lambda_2 = {:e}", lambdas[0] - lambdas[1])));
    }
    if lambdas[1].abs() > SNAP_TOL {
        return Err(Error::SpectralDegeneracy(format!("second eigenvalue {} is not zero", lambdas[1])));
    }
    lambdas[0] = mu;
    lambdas[1] = 0.0;

    let mut eigenvectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    eigenvectors.push(vec![1.0; n]);
    eigenvectors.push(config.positions.clone());
    for &k in order.iter().skip(2) {
        let col = eig.eigenvectors.column(k);
        let v: Vec<f64> = (0..n).map(|i| col[i] / m[i].sqrt()).collect();
        eigenvectors.push(v);
    }
    for v in eigenvectors.iter_mut().skip(2) {
        fix_sign(v);
    }

    let betas = lambdas.iter().skip(2).map(|l| -l / mu).collect();
    Ok(ReductionSpectrum { lambdas, eigenvectors, betas, mu })
}

/// Makes the entry of largest magnitude positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `max |v_i^T M v_j - delta_ij|`.
pub fn m_orthonormality_residual(config: &CollinearConfig, spectrum: &ReductionSpectrum) -> f64 {
    let v = spectrum.eigenvector_matrix();
    let mm = DMatrix::from_diagonal(&DVector::from_column_slice(config.masses.as_slice()));
    let gram = v.transpose() * mm * &v;
    let n = config.n();
    (gram - DMatrix::<f64>::identity(n, n)).amax()
}

/// `F_ik = sum_{j != i} m_i m_j (b_ik - b_jk) / |a_i - a_j|^3` for
/// `k = 3..n` (column `k - 3` of the result).
pub fn f_coefficients(config: &CollinearConfig, spectrum: &ReductionSpectrum) -> DMatrix<f64> {
    let n = config.n();
    let m = config.masses.as_slice();
    let a = &config.positions;
    DMatrix::from_fn(n, n.saturating_sub(2), |i, c| {
        let b = &spectrum.eigenvectors[c + 2];
        (0..n)
            .filter(|&j| j != i)
            .map(|j| m[i] * m[j] * (b[i] - b[j]) / (a[i] - a[j]).abs().powi(3))
            .sum()
    })
}

/// Checks that the flow `u' = M^{-1} B u` pushes a boundary point of the cone
/// `K = { sum m_i u_i = 0, u_1 <= ... <= u_n }` into its interior.
///
/// Returns `true` iff `u'_j - u'_i > 0` across every maximal run
/// `u_i = ... = u_j` of equal coordinates.
pub fn cone_monotonicity_check(config: &CollinearConfig, u: &[f64]) -> Result<bool> {
    let n = config.n();
    if u.len() != n {
        return Err(Error::WrongArity { expected: n, got: u.len() });
    }
    let m = config.masses.as_slice();
    let scale = u.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::NotBoundaryPoint("u is the origin".into()));
    }
    let tie = 1e-12 * scale;
    let weighted: f64 = m.iter().zip(u).map(|(m, u)| m * u).sum();
    if weighted.abs() > 1e-10 * scale {
        return Err(Error::InvalidParameter(format!("sum m_i u_i = {weighted:e}, expected 0")));
    }
    if u.windows(2).any(|w| w[1] < w[0] - tie) {
        return Err(Error::InvalidParameter("u is not in ascending order".into()));
    }

    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || u[k] - u[k - 1] > tie {
            if k - 1 > start {
                runs.push((start, k - 1));
            }
            start = k;
        }
    }
    if runs.is_empty() {
        return Err(Error::NotBoundaryPoint("no equal coordinates".into()));
    }
    if runs.len() == 1 && runs[0] == (0, n - 1) {
        return Err(Error::NotBoundaryPoint("u is constant".into()));
    }

    let b = hessian_b(config).0;
    let uv = DVector::from_column_slice(u);
    let bu = b * uv;
    let udot: Vec<f64> = (0..n).map(|i| bu[i] / m[i]).collect();
    Ok(runs.iter().all(|&(i, j)| udot[j] - udot[i] > 0.0))
}
