//! Collinear central configurations.
//!
//! Masses are normalized to total 1 and positions to zero center of mass and
//! unit inertia `sum m_i a_i^2 = 1`. In that normalization a configuration is
//! central iff
//!
//! ```text
//! sum_{j != i} m_j (a_j - a_i) / |a_j - a_i|^3 = -mu * a_i,   mu = U(a)
//! ```
//!
//! for every body `i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n >= 2` strictly positive masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MassVector(Vec<f64>);

impl MassVector {
    /// Normalizes raw positive masses so they sum to one. Order is kept.
    pub fn new(raw: &[f64]) -> Result<Self> {
        normalize_masses(raw)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Masses in reverse order.
    pub fn reversed(&self) -> Self {
        MassVector(self.0.iter().rev().copied().collect())
    }
}

impl std::ops::Index<usize> for MassVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for MassVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        normalize_masses(&v)
    }
}

impl From<MassVector> for Vec<f64> {
    fn from(m: MassVector) -> Self {
        m.0
    }
}

/// Divides every mass by the total. Rejects zero, negative and non-finite
/// entries.
pub fn normalize_masses(raw: &[f64]) -> Result<MassVector> {
    if raw.len() < 2 {
        return Err(Error::TooFewBodies { got: raw.len(), min: 2 });
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, &m)| !(m > 0.0 && m.is_finite())) {
        return Err(Error::NonPositiveMass { index, value });
    }
    let total: f64 = raw.iter().sum();
    Ok(MassVector(raw.iter().map(|m| m / total).collect()))
}

/// Coefficients of the Euler quintic, highest degree first.
pub fn euler_quintic_coefficients(m1: f64, m2: f64, m3: f64) -> [f64; 6] {
    [
        m3 + m2,
        3.0 * m3 + 2.0 * m2,
        3.0 * m3 + m2,
        -(3.0 * m1 + m2),
        -(3.0 * m1 + 2.0 * m2),
        -(m1 + m2),
    ]
}

fn horner(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Safeguarded Newton on a bracket `[lo, hi]` with `f(lo) < 0 < f(hi)`.
pub(crate) fn newton_bisect(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Unique positive root of the Euler quintic for masses `m1, m2, m3`.
///
/// `x` is the ratio `|q1 q2| / |q2 q3|` of the two gaps of the collinear
/// three-body central configuration. `m2 = 0` gives the restricted problem.
pub fn euler_quintic_root(m1: f64, m2: f64, m3: f64) -> Result<f64> {
    if !(m1 > 0.0 && m3 > 0.0 && m2 >= 0.0) || !(m1 + m2 + m3).is_finite() {
        return Err(Error::InvalidParameter(format!(
            "euler quintic needs m1, m3 > 0 and m2 >= 0, got ({m1}, {m2}, {m3})"
        )));
    }
    let coeffs = euler_quintic_coefficients(m1, m2, m3);
    let f = |x: f64| horner(&coeffs, x);
    // p(0) = -(m1 + m2) < 0 and the leading coefficient is positive.
    let mut hi = 1.0;
    while f(hi).0 <= 0.0 {
        hi *= 2.0;
    }
    Ok(newton_bisect(f, 0.0, hi))
}

/// Mass parameter of the three-body Euler configuration.
pub fn beta_three_body(masses: &MassVector) -> Result<f64> {
    if masses.len() != 3 {
        return Err(Error::WrongArity { expected: 3, got: masses.len() });
    }
    let (m1, m2, m3) = (masses[0], masses[1], masses[2]);
    let x = euler_quintic_root(m1, m2, m3)?;
    Ok(beta_from_ratio(m1, m2, m3, x))
}

pub(crate) fn beta_from_ratio(m1: f64, m2: f64, m3: f64, x: f64) -> f64 {
    let x2 = x * x;
    (m1 * (3.0 * x2 + 3.0 * x + 1.0) + m3 * x2 * (x2 + 3.0 * x + 3.0))
        / (x2 + m2 * ((x + 1.0).powi(2) * (x2 + 1.0) - x2))
}

/// A normalized collinear central configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearConfig {
    pub masses: MassVector,
    /// Strictly increasing positions on the line.
    pub positions: Vec<f64>,
    /// Potential `U(a)`.
    pub mu: f64,
}

impl CollinearConfig {
    /// Wraps already-computed positions; `mu` is evaluated from them.
    pub fn from_positions(masses: MassVector, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::WrongArity { expected: masses.len(), got: positions.len() });
        }
        if let Some(i) = positions.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::Collision { i, j: i + 1, distance: positions[i + 1] - positions[i] });
        }
        let mu = pair_potential(masses.as_slice(), &positions);
        Ok(CollinearConfig { masses, positions, mu })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn center_of_mass(&self) -> f64 {
        self.masses.as_slice().iter().zip(&self.positions).map(|(m, a)| m * a).sum()
    }

    pub fn inertia(&self) -> f64 {
        self.masses.as_slice().iter().zip(&self.positions).map(|(m, a)| m * a * a).sum()
    }

    /// Per-body residual of the central-configuration equations.
    pub fn cc_residuals(&self) -> Vec<f64> {
        cc_residuals(self.masses.as_slice(), &self.positions, self.mu)
    }

    pub fn max_cc_residual(&self) -> f64 {
        self.cc_residuals().iter().fold(0.0, |acc, r| acc.max(r.abs()))
    }
}

fn pair_potential(m: &[f64], a: &[f64]) -> f64 {
    let n = m.len();
    let mut u = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            u += m[i] * m[j] / (a[i] - a[j]).abs();
        }
    }
    u
}

fn cc_residuals(m: &[f64], a: &[f64], mu: f64) -> Vec<f64> {
    let n = m.len();
    (0..n)
        .map(|i| {
            let pull: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = a[j] - a[i];
                    m[j] * d / d.abs().powi(3)
                })
                .sum();
            pull + mu * a[i]
        })
        .collect()
}

/// `mu = sum_{i<j} m_i m_j / |a_i - a_j|`.
pub fn potential_mu(config: &CollinearConfig) -> f64 {
    pair_potential(config.masses.as_slice(), &config.positions)
}

const CC_TARGET: f64 = 1e-12;
const CC_ACCEPT: f64 = 1e-10;
const CC_MAX_ITER: usize = 200;

/// Solves for the unique collinear central configuration of `masses` in the
/// given order.
///
/// Gauss-Newton on the `n` central-configuration equations plus the
/// center-of-mass and inertia constraints, with `mu` as an extra unknown.
pub fn solve_collinear_cc(masses: &MassVector) -> Result<CollinearConfig> {
    let m = masses.as_slice();
    let n = m.len();

    let mut a: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    project_onto_constraints(m, &mut a);
    let mut mu = pair_potential(m, &a);

    let residual = |a: &[f64], mu: f64| -> DVector<f64> {
        let mut r = DVector::zeros(n + 2);
        for (i, ri) in cc_residuals(m, a, mu).into_iter().enumerate() {
            r[i] = ri;
        }
        r[n] = m.iter().zip(a).map(|(m, a)| m * a).sum();
        r[n + 1] = m.iter().zip(a).map(|(m, a)| m * a * a).sum::<f64>() - 1.0;
        r
    };

    let mut r = residual(&a, mu);
    let mut rnorm = r.amax();
    let mut iter = 0;
    while rnorm > CC_TARGET && iter < CC_MAX_ITER {
        iter += 1;
        let jac = cc_jacobian(m, &a, mu);
        let step = jac
            .svd(true, true)
            .solve(&(-&r), 1e-14)
            .map_err(|e| Error::ConvergenceFailure(format!("singular Gauss-Newton system: {e}")))?;

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = a.iter().enumerate().map(|(i, ai)| ai + t * step[i]).collect();
            let trial_mu = mu + t * step[n];
            if trial.windows(2).all(|w| w[0] < w[1]) {
                let tr = residual(&trial, trial_mu);
                let tn = tr.amax();
                if tn < rnorm {
                    a = trial;
                    mu = trial_mu;
                    r = tr;
                    rnorm = tn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if rnorm > CC_ACCEPT {
        return Err(Error::ConvergenceFailure(format!(
            "central configuration residual {rnorm:e} after {iter} iterations"
        )));
    }
    let cfg = CollinearConfig::from_positions(masses.clone(), a)?;
    if !(cfg.mu.is_finite() && cfg.mu > 0.0) || cfg.positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::ConvergenceFailure(format!("degenerate configuration, mu = {:e}", cfg.mu)));
    }
    Ok(cfg)
}

fn project_onto_constraints(m: &[f64], a: &mut [f64]) {
    let com: f64 = m.iter().zip(a.iter()).map(|(m, a)| m * a).sum();
    a.iter_mut().for_each(|x| *x -= com);
    let scale = m.iter().zip(a.iter()).map(|(m, a)| m * a * a).sum::<f64>().sqrt();
    a.iter_mut().for_each(|x| *x /= scale);
}

fn cc_jacobian(m: &[f64], a: &[f64], mu: f64) -> DMatrix<f64> {
    let n = m.len();
    let mut jac = DMatrix::zeros(n + 2, n + 1);
    for i in 0..n {
        let mut diag = mu;
        for k in 0..n {
            if k == i {
                continue;
            }
            let c = 2.0 / (a[k] - a[i]).abs().powi(3);
            jac[(i, k)] = -m[k] * c;
            diag += m[k] * c;
        }
        jac[(i, i)] = diag;
        jac[(i, n)] = a[i];
        jac[(n, i)] = m[i];
        jac[(n + 1, i)] = 2.0 * m[i] * a[i];
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quintic_bisection(m1: f64, m2: f64, m3: f64) -> f64 {
        let c = euler_quintic_coefficients(m1, m2, m3);
        let p = |x: f64| c.iter().fold(0.0, |acc, &k| acc * x + k);
        let (mut lo, mut hi) = (1e-6f64, 1e6f64);
        while hi - lo > 1e-13 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if p(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normalize_examples() {
        let m = normalize_masses(&[1.0, 1.0, 1.0]).unwrap();
        for &x in m.as_slice() {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-16);
        }
        assert_eq!(normalize_masses(&[2.0, 1.0, 1.0]).unwrap().as_slice(), &[0.5, 0.25, 0.25]);
        let em = normalize_masses(&[5.97237e24, 7.342e22]).unwrap();
        assert!((em[0] - 0.9879).abs() < 1e-4);
        assert!((em[1] - 0.0121).abs() < 1e-4);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert_eq!(normalize_masses(&[1.0]).unwrap_err().name(), "TooFewBodies");
        assert_eq!(normalize_masses(&[1.0, 0.0, 1.0]).unwrap_err(), Error::NonPositiveMass { index: 1, value: 0.0 });
        assert_eq!(normalize_masses(&[1.0, -2.0]).unwrap_err().name(), "NonPositiveMass");
        assert_eq!(normalize_masses(&[1.0, f64::NAN]).unwrap_err().name(), "NonPositiveMass");
    }

    #[test]
    fn quintic_equal_masses_root_is_one() {
        let t = 1.0 / 3.0;
        assert_relative_eq!(euler_quintic_root(t, t, t).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn quintic_matches_bisection_oracle() {
        for &(m1, m2, m3) in &[(0.9879, 0.0, 0.0121), (0.5, 0.3, 0.2), (0.1, 0.8, 0.1), (0.01, 0.01, 0.98)] {
            let x = euler_quintic_root(m1, m2, m3).unwrap();
            let oracle = quintic_bisection(m1, m2, m3);
            assert_relative_eq!(x, oracle, max_relative = 1e-12);
            let c = euler_quintic_coefficients(m1, m2, m3);
            let p = c.iter().fold(0.0, |acc, &k| acc * x + k) / c[0];
            assert!(p.abs() / x.max(1.0).powi(5) <= 1e-13, "residual {p}");
        }
        // Restricted Earth-Moon case lands on x0 / (1 - x0) with x0 ~ 0.8493.
        let x = euler_quintic_root(0.9879, 0.0, 0.0121).unwrap();
        assert!((x / (1.0 + x) - 0.8493).abs() < 5e-4);
    }

    #[test]
    fn quintic_rejects_missing_outer_mass() {
        assert!(euler_quintic_root(0.0, 0.5, 0.5).is_err());
        assert!(euler_quintic_root(0.5, -0.1, 0.5).is_err());
    }

    #[test]
    fn two_equal_bodies() {
        let cfg = solve_collinear_cc(&MassVector::new(&[1.0, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(cfg.positions[0], -1.0, epsilon = 1e-13);
        assert_relative_eq!(cfg.positions[1], 1.0, epsilon = 1e-13);
        assert_relative_eq!(cfg.mu, 0.125, epsilon = 1e-13);
    }

    #[test]
    fn three_equal_bodies() {
        let cfg = solve_collinear_cc(&MassVector::new(&[1.0, 1.0, 1.0]).unwrap()).unwrap();
        let c = 1.5f64.sqrt();
        assert_relative_eq!(cfg.positions[0], -c, epsilon = 1e-12);
        assert!(cfg.positions[1].abs() < 1e-12);
        assert_relative_eq!(cfg.positions[2], c, epsilon = 1e-12);
        let direct = (1.0 / 9.0) * (2.0 / c + 1.0 / (2.0 * c));
        assert_relative_eq!(potential_mu(&cfg), direct, epsilon = 1e-12);
    }

    #[test]
    fn three_body_beta_equal_masses() {
        let m = MassVector::new(&[1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(beta_three_body(&m).unwrap(), 1.4, epsilon = 1e-12);
        let four = MassVector::new(&[1.0; 4]).unwrap();
        assert_eq!(beta_three_body(&four).unwrap_err().name(), "WrongArity");
    }

    #[test]
    fn restricted_mu_limit() {
        // mu of the two-body (m, 1-m) configuration is [m(1-m)]^{3/2}.
        let m = 0.9879;
        let cfg = solve_collinear_cc(&MassVector::new(&[m, 1.0 - m]).unwrap()).unwrap();
        assert_relative_eq!(cfg.mu, (m * (1.0 - m)).powf(1.5), max_relative = 1e-12);
    }
}
