//! Randomized property suites behind `verify`.
//!
//! The reduction-matrix suite checks the spectrum of the raw, non-symmetric
//! `D` rather than the snapped values `spectrum_and_betas` returns.

use moulton_core::cc_core::{solve_collinear_cc, MassVector};
use moulton_core::ms_coords::{hessian_blocks_analytic, hessian_blocks_fd, OrbitParams, FD_DEFAULT_STEP};
use moulton_core::spectral::{m_orthonormality_residual, reduction_matrix_d, spectrum_and_betas};
use moulton_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const EIGEN_TOL: f64 = 1e-9;
pub const BETA_FLOOR: f64 = -1e-12;
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
pub const DECOUPLING_TOL: f64 = 1e-6;

pub const DECOUPLING_BODIES: [usize; 3] = [3, 4, 5];
pub const DECOUPLING_ECCS: [f64; 3] = [0.0, 0.3, 0.7];
pub const DECOUPLING_ANOMALIES: [f64; 3] = [0.0, PI / 3.0, PI];

fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSuite {
    pub trials: usize,
    pub failures: usize,
    /// `max |lambda_1 - mu|`.
    pub lambda1_deviation: f64,
    /// Smallest gap `lambda_1 - lambda_2`.
    pub min_gap: f64,
    pub lambda2_abs: f64,
    /// Largest of `lambda_3, ..., lambda_n`.
    pub max_rest: f64,
    pub min_beta: f64,
    pub orthonormality: f64,
    pub first_failure: Option<String>,
}

impl SpectrumSuite {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct SpectrumCase {
    lambda1_deviation: f64,
    gap: f64,
    lambda2_abs: f64,
    max_rest: f64,
    min_beta: f64,
    orthonormality: f64,
}

fn spectrum_case(masses: &[f64]) -> Result<SpectrumCase> {
    let cfg = solve_collinear_cc(&MassVector::new(masses)?)?;
    let mut ev: Vec<f64> = reduction_matrix_d(&cfg).d.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let sp = spectrum_and_betas(&cfg)?;
    Ok(SpectrumCase {
        lambda1_deviation: (ev[0] - cfg.mu).abs(),
        gap: ev[0] - ev[1],
        lambda2_abs: ev[1].abs(),
        max_rest: ev[2..].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_beta: sp.betas.iter().copied().fold(f64::INFINITY, f64::min),
        orthonormality: m_orthonormality_residual(&cfg, &sp),
    })
}

/// `trials` random mass vectors with `n` drawn from `3..=8`.
pub fn spectrum_suite(seed: u64, trials: usize) -> SpectrumSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectrumSuite {
        trials,
        failures: 0,
        lambda1_deviation: 0.0,
        min_gap: f64::INFINITY,
        lambda2_abs: 0.0,
        max_rest: f64::NEG_INFINITY,
        min_beta: f64::INFINITY,
        orthonormality: 0.0,
        first_failure: None,
    };
    for _ in 0..trials {
        let n = rng.random_range(3..=8);
        let masses = random_masses(&mut rng, n);
        let problem = match spectrum_case(&masses) {
            Ok(c) => {
                s.lambda1_deviation = s.lambda1_deviation.max(c.lambda1_deviation);
                s.min_gap = s.min_gap.min(c.gap);
                s.lambda2_abs = s.lambda2_abs.max(c.lambda2_abs);
                s.max_rest = s.max_rest.max(c.max_rest);
                s.min_beta = s.min_beta.min(c.min_beta);
                s.orthonormality = s.orthonormality.max(c.orthonormality);
                let ok = c.lambda1_deviation <= EIGEN_TOL
                    && c.gap > EIGEN_TOL
                    && c.lambda2_abs <= EIGEN_TOL
                    && c.max_rest <= EIGEN_TOL
                    && c.min_beta >= BETA_FLOOR
                    && c.orthonormality <= ORTHONORMALITY_TOL;
                (!ok).then(|| "tolerance exceeded".to_string())
            }
            Err(e) => Some(e.to_string()),
        };
        if let Some(msg) = problem {
            s.failures += 1;
            s.first_failure.get_or_insert_with(|| format!("masses {masses:?}: {msg}"));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingSuite {
    pub cases: usize,
    pub failures: usize,
    /// Largest entry outside the `2 x 2` diagonal blocks.
    pub max_off_block: f64,
    /// Largest deviation of a diagonal block from the closed form.
    pub max_block_deviation: f64,
    pub first_failure: Option<String>,
}

impl DecouplingSuite {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn decoupling_case(masses: &[f64], e: f64, theta: f64) -> Result<(f64, f64)> {
    let cfg = solve_collinear_cc(&MassVector::new(masses)?)?;
    let sp = spectrum_and_betas(&cfg)?;
    let orbit = OrbitParams::unit_semi_major_axis(cfg.mu, e)?;
    let h = hessian_blocks_fd(&cfg, &sp, &orbit, theta, FD_DEFAULT_STEP)?;
    let blocks = hessian_blocks_analytic(&sp.betas, e, theta);
    let (mut off, mut dev) = (0.0f64, 0.0f64);
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            if r / 2 == c / 2 {
                dev = dev.max((h[(r, c)] - blocks[r / 2][(r % 2, c % 2)]).abs());
            } else {
                off = off.max(h[(r, c)].abs());
            }
        }
    }
    Ok((off, dev))
}

/// `per_n` random mass vectors for each body count, each checked on the
/// full eccentricity by anomaly grid.
pub fn decoupling_suite(seed: u64, per_n: usize) -> DecouplingSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut s = DecouplingSuite { cases: 0, failures: 0, max_off_block: 0.0, max_block_deviation: 0.0, first_failure: None };
    for n in DECOUPLING_BODIES {
        for _ in 0..per_n {
            let masses = random_masses(&mut rng, n);
            for e in DECOUPLING_ECCS {
                for theta in DECOUPLING_ANOMALIES {
                    s.cases += 1;
                    let problem = match decoupling_case(&masses, e, theta) {
                        Ok((off, dev)) => {
                            s.max_off_block = s.max_off_block.max(off);
                            s.max_block_deviation = s.max_block_deviation.max(dev);
                            (off > DECOUPLING_TOL || dev > DECOUPLING_TOL).then(|| format!("off {off:e}, block {dev:e}"))
                        }
                        Err(err) => Some(err.to_string()),
                    };
                    if let Some(msg) = problem {
                        s.failures += 1;
                        s.first_failure.get_or_insert_with(|| format!("masses {masses:?} e {e} theta {theta}: {msg}"));
                    }
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub spectrum: SpectrumSuite,
    pub decoupling: DecouplingSuite,
    pub passed: bool,
}

pub fn run_all(seed: u64, trials: usize) -> VerifyReport {
    let spectrum = spectrum_suite(seed, trials);
    let decoupling = decoupling_suite(seed, 1);
    let passed = spectrum.passed() && decoupling.passed();
    VerifyReport { seed, spectrum, decoupling, passed }
}
