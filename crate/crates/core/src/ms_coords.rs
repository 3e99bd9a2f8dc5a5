//! Central-configuration coordinates and the decoupled position Hessian.
//!
//! Positions are written as `q_i = a_i z + sum_k b_{ik} w_{k-2}` with `z` the
//! Kepler coordinate and `w_1 .. w_{n-2}` the essential coordinates. After the
//! rotating, pulsating and true-anomaly rescalings the position-dependent part
//! of the Hamiltonian is
//!
//! ```text
//! V(theta, z, w) = (p - r) / (2p) * (|z|^2 + sum |w_k|^2) - r / sigma * U(z, w)
//! ```
//!
//! with `r = p / (1 + e cos theta)` and `sigma = (mu p)^{1/4}`. The EEM
//! solution sits at `z = (sigma, 0)`, `w = 0`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::cc_core::CollinearConfig;
use crate::error::{Error, Result};
use crate::spectral::ReductionSpectrum;

/// The `2n x 2n` coordinate matrix `A` built from `2 x 2` scalar blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MeyerSchmidtBasis {
    pub a: DMatrix<f64>,
    /// `max |A^T M A - I|`.
    pub orthonormality_residual: f64,
}

const BASIS_TOL: f64 = 1e-8;

pub fn build_a(config: &CollinearConfig, spectrum: &ReductionSpectrum) -> Result<MeyerSchmidtBasis> {
    let n = config.n();
    if spectrum.eigenvectors.len() != n {
        return Err(Error::WrongArity { expected: n, got: spectrum.eigenvectors.len() });
    }
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for k in 0..n {
            let coeff = match k {
                0 => 1.0,
                1 => config.positions[i],
                _ => spectrum.eigenvectors[k][i],
            };
            a[(2 * i, 2 * k)] = coeff;
            a[(2 * i + 1, 2 * k + 1)] = coeff;
        }
    }
    let m = DMatrix::from_diagonal(&DVector::from_iterator(
        2 * n,
        config.masses.as_slice().iter().flat_map(|&m| [m, m]),
    ));
    let gram = a.transpose() * m * &a;
    let deviation = (gram - DMatrix::<f64>::identity(2 * n, 2 * n)).amax();
    if deviation > BASIS_TOL {
        return Err(Error::BasisMismatch { deviation });
    }
    Ok(MeyerSchmidtBasis { a, orthonormality_residual: deviation })
}

/// Kepler ellipse in true anomaly and the matching rescaling constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitParams {
    pub e: f64,
    pub p: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl OrbitParams {
    pub fn new(mu: f64, e: f64, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::InvalidParameter(format!("eccentricity {e} outside [0, 1)")));
        }
        if !(p > 0.0 && p.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("need p > 0 and mu > 0, got p = {p}, mu = {mu}")));
        }
        Ok(OrbitParams { e, p, sigma: (mu * p).powf(0.25), mu })
    }

    /// Orbit with unit semi-major axis, `p = 1 - e^2`.
    pub fn unit_semi_major_axis(mu: f64, e: f64) -> Result<Self> {
        Self::new(mu, e, 1.0 - e * e)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.p / (1.0 + self.e * theta.cos())
    }
}

fn pair_coefficients(config: &CollinearConfig, spectrum: &ReductionSpectrum, i: usize, j: usize) -> Vec<f64> {
    let n = config.n();
    let mut c = Vec::with_capacity(n - 1);
    c.push(config.positions[i] - config.positions[j]);
    for k in 2..n {
        c.push(spectrum.eigenvectors[k][i] - spectrum.eigenvectors[k][j]);
    }
    c
}

fn separation(coeffs: &[f64], xi: &[[f64; 2]]) -> [f64; 2] {
    coeffs.iter().zip(xi).fold([0.0, 0.0], |acc, (c, x)| [acc[0] + c * x[0], acc[1] + c * x[1]])
}

fn stack(z: [f64; 2], w: &[[f64; 2]]) -> Vec<[f64; 2]> {
    std::iter::once(z).chain(w.iter().copied()).collect()
}

const COLLISION_TOL: f64 = 1e-12;

/// Potential `U(z, w) = sum_{i<j} m_i m_j / d_ij`.
pub fn potential_u_new(
    z: [f64; 2],
    w: &[[f64; 2]],
    config: &CollinearConfig,
    spectrum: &ReductionSpectrum,
) -> Result<f64> {
    let n = config.n();
    if w.len() != n - 2 {
        return Err(Error::WrongArity { expected: n - 2, got: w.len() });
    }
    let m = config.masses.as_slice();
    let xi = stack(z, w);
    let mut u = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = separation(&pair_coefficients(config, spectrum, i, j), &xi);
            let d = s[0].hypot(s[1]);
            if d < COLLISION_TOL {
                return Err(Error::Collision { i, j, distance: d });
            }
            u += m[i] * m[j] / d;
        }
    }
    Ok(u)
}

/// Exact Hessian of `U` with respect to `(z, w_1, ..., w_{n-2})`, a
/// `2(n-1)` square matrix ordered `z_x, z_y, w1_x, w1_y, ...`.
pub fn potential_hessian(
    z: [f64; 2],
    w: &[[f64; 2]],
    config: &CollinearConfig,
    spectrum: &ReductionSpectrum,
) -> Result<DMatrix<f64>> {
    let n = config.n();
    if w.len() != n - 2 {
        return Err(Error::WrongArity { expected: n - 2, got: w.len() });
    }
    let m = config.masses.as_slice();
    let xi = stack(z, w);
    let dim = 2 * (n - 1);
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in i + 1..n {
            let c = pair_coefficients(config, spectrum, i, j);
            let s = separation(&c, &xi);
            let d = s[0].hypot(s[1]);
            if d < COLLISION_TOL {
                return Err(Error::Collision { i, j, distance: d });
            }
            let mm = m[i] * m[j];
            let d3 = d.powi(3);
            let d5 = d.powi(5);
            let tensor = Matrix2::new(
                -1.0 / d3 + 3.0 * s[0] * s[0] / d5,
                3.0 * s[0] * s[1] / d5,
                3.0 * s[1] * s[0] / d5,
                -1.0 / d3 + 3.0 * s[1] * s[1] / d5,
            );
            for k in 0..n - 1 {
                for l in 0..n - 1 {
                    let f = mm * c[k] * c[l];
                    for (r, cc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        h[(2 * k + r, 2 * l + cc)] += f * tensor[(r, cc)];
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Closed-form diagonal blocks `[H_zz, H_w1w1, ...]` of the position Hessian
/// at the EEM solution.
pub fn hessian_blocks_analytic(betas: &[f64], e: f64, theta: f64) -> Vec<Matrix2<f64>> {
    let ec = e * theta.cos();
    let kepler = Matrix2::new(-(2.0 - ec) / (1.0 + ec), 0.0, 0.0, 1.0);
    std::iter::once(kepler)
        .chain(betas.iter().map(|&b| {
            Matrix2::new(-(2.0 * b + 2.0 - ec) / (1.0 + ec), 0.0, 0.0, (b + 1.0 + ec) / (1.0 + ec))
        }))
        .collect()
}

/// Position-dependent part of the true-anomaly Hamiltonian.
pub fn position_hamiltonian(
    xi: &[f64],
    orbit: &OrbitParams,
    theta: f64,
    config: &CollinearConfig,
    spectrum: &ReductionSpectrum,
) -> Result<f64> {
    let r = orbit.radius(theta);
    let pts: Vec<[f64; 2]> = xi.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let sq: f64 = xi.iter().map(|x| x * x).sum();
    let u = potential_u_new(pts[0], &pts[1..], config, spectrum)?;
    Ok((orbit.p - r) / (2.0 * orbit.p) * sq - r / orbit.sigma * u)
}

/// The EEM solution `z = (sigma, 0)`, `w = 0` as a flat position vector.
pub fn eem_position(n: usize, orbit: &OrbitParams) -> Vec<f64> {
    let mut xi = vec![0.0; 2 * (n - 1)];
    xi[0] = orbit.sigma;
    xi
}

pub const FD_MIN_STEP: f64 = 1e-7;
pub const FD_MAX_STEP: f64 = 1e-3;
pub const FD_DEFAULT_STEP: f64 = 1e-4;

/// Central-difference Hessian with one Richardson refinement (`h` and `h/2`).
pub fn fd_hessian(f: impl Fn(&[f64]) -> Result<f64>, x0: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let plain = |h: f64| -> Result<DMatrix<f64>> {
        let dim = x0.len();
        let mut out = DMatrix::zeros(dim, dim);
        let f0 = f(x0)?;
        let mut x = x0.to_vec();
        for i in 0..dim {
            x[i] = x0[i] + h;
            let fp = f(&x)?;
            x[i] = x0[i] - h;
            let fm = f(&x)?;
            x[i] = x0[i];
            out[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut eval = |si: f64, sj: f64| -> Result<f64> {
                    x[i] = x0[i] + si * h;
                    x[j] = x0[j] + sj * h;
                    let v = f(&x);
                    x[i] = x0[i];
                    x[j] = x0[j];
                    v
                };
                let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?) / (4.0 * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    };
    let coarse = plain(h)?;
    let fine = plain(0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Finite-difference Hessian of the position part of the Hamiltonian at the
/// EEM solution, `2(n-1)` square.
pub fn hessian_blocks_fd(
    config: &CollinearConfig,
    spectrum: &ReductionSpectrum,
    orbit: &OrbitParams,
    theta: f64,
    h: f64,
) -> Result<DMatrix<f64>> {
    if h < FD_MIN_STEP {
        return Err(Error::StepTooSmall(h));
    }
    if h > FD_MAX_STEP {
        return Err(Error::StepTooLarge(h));
    }
    let x0 = eem_position(config.n(), orbit);
    fd_hessian(|xi| position_hamiltonian(xi, orbit, theta, config, spectrum), &x0, h)
}

/// Full `4(n-1)` Hessian `B(theta)` ordered momenta first, then positions.
/// The identity and `+-J` blocks are exact; the position block is the
/// finite-difference one.
pub fn linearized_coefficient_fd(
    config: &CollinearConfig,
    spectrum: &ReductionSpectrum,
    orbit: &OrbitParams,
    theta: f64,
    h: f64,
) -> Result<DMatrix<f64>> {
    let pos = hessian_blocks_fd(config, spectrum, orbit, theta, h)?;
    let k = pos.nrows();
    let mut b = DMatrix::zeros(2 * k, 2 * k);
    b.view_mut((0, 0), (k, k)).fill_with_identity();
    b.view_mut((k, k), (k, k)).copy_from(&pos);
    for blk in 0..k / 2 {
        let (p, q) = (2 * blk, k + 2 * blk);
        // d^2/dz dZ of z . J Z is J; the transposed corner is -J.
        b[(q, p + 1)] = -1.0;
        b[(q + 1, p)] = 1.0;
        b[(p, q + 1)] = 1.0;
        b[(p + 1, q)] = -1.0;
    }
    Ok(b)
}
