//! Collinear four-body problem with two small masses between two primaries.
//!
//! Masses are `(m, eps, tau*eps, 1 - m - (1+tau) eps)` at `q = (0, x, y, 1) alpha`
//! with `0 < x < y < 1`. As `eps -> 0` both stations converge to the
//! restricted Euler point `x0(m)` and the two mass parameters converge to
//! `beta` and `3 (beta + 1)`.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::cc_core::{newton_bisect, CollinearConfig, MassVector};
use crate::error::{Error, Result};
use crate::monodromy::{self, Factor, LinearizedBlock, Resonance, StabilityPattern};

fn check_m_tau(m: f64, tau: f64) -> Result<()> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidParameter(format!("m = {m} outside (0, 1)")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau = {tau} must be positive")));
    }
    Ok(())
}

fn check_eps(m: f64, tau: f64, eps: f64) -> Result<()> {
    check_m_tau(m, tau)?;
    let cap = (1.0 - m) / (tau + 1.0);
    if !(eps >= 1e-12 && eps < cap) {
        return Err(Error::InvalidParameter(format!("eps = {eps} outside [1e-12, {cap})")));
    }
    Ok(())
}

/// `(m1, m2, m3, m4)`.
pub fn family_masses(m: f64, tau: f64, eps: f64) -> [f64; 4] {
    [m, eps, tau * eps, 1.0 - m - (1.0 + tau) * eps]
}

struct Terms {
    e1: f64,
    e2: f64,
    e3: f64,
    r1: f64,
    r2: f64,
    r3: f64,
}

fn cc_terms(m: f64, tau: f64, eps: f64, x: f64, y: f64) -> Terms {
    let m4 = 1.0 - m - (1.0 + tau) * eps;
    let c = 1.0 + tau - x - tau * y;
    let r1 = 1.0 - m - c * eps;
    Terms {
        e1: eps / (x * x) + tau * eps / (y * y) + m4,
        e2: -m / (x * x) + tau * eps / (y - x).powi(2) + m4 / (1.0 - x).powi(2),
        e3: -m / (y * y) - eps / (y - x).powi(2) + m4 / (1.0 - y).powi(2),
        r1,
        r2: r1 - x,
        r3: r1 - y,
    }
}

/// Ratio condition between the accelerations of bodies 1 and 2.
pub fn g_eps(m: f64, tau: f64, eps: f64, x: f64, y: f64) -> f64 {
    let t = cc_terms(m, tau, eps, x, y);
    t.e1 * t.r2 - t.e2 * t.r1
}

/// Ratio condition between the accelerations of bodies 1 and 3.
pub fn h_eps(m: f64, tau: f64, eps: f64, x: f64, y: f64) -> f64 {
    let t = cc_terms(m, tau, eps, x, y);
    t.e1 * t.r3 - t.e3 * t.r1
}

/// `1/alpha^2` as a polynomial in `eps`.
pub fn inv_alpha_sq_polynomial(m: f64, tau: f64, eps: f64, x: f64, y: f64) -> f64 {
    let c = 1.0 + tau - x - tau * y;
    m * (1.0 - m) + ((1.0 - x).powi(2) + tau * (1.0 - y).powi(2) - 2.0 * m * c) * eps - c * c * eps * eps
}

/// `x^5 - (3-m) x^4 + (3-2m) x^3 - m x^2 + 2m x - m` and its derivative.
pub fn x0_polynomial(m: f64, x: f64) -> (f64, f64) {
    let c = [1.0, -(3.0 - m), 3.0 - 2.0 * m, -m, 2.0 * m, -m];
    let mut p = 0.0;
    let mut dp = 0.0;
    for k in c {
        dp = dp * x + p;
        p = p * x + k;
    }
    (p, dp)
}

/// Limit station position in `(0, 1)`; the polynomial is `-m` at 0 and `1 - m` at 1.
pub fn limit_x0(m: f64) -> Result<f64> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidParameter(format!("m = {m} outside (0, 1)")));
    }
    Ok(newton_bisect(|x| x0_polynomial(m, x), 0.0, 1.0))
}

pub fn beta_limit(m: f64, x0: f64) -> f64 {
    -1.0 + m / x0.powi(3) + (1.0 - m) / (1.0 - x0).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourBodyFamily {
    pub m: f64,
    pub tau: f64,
    pub eps: f64,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub g_residual: f64,
    pub h_residual: f64,
}

impl FourBodyFamily {
    pub fn masses(&self) -> [f64; 4] {
        family_masses(self.m, self.tau, self.eps)
    }

    /// Center-of-mass positions `a_ix`.
    pub fn positions(&self) -> [f64; 4] {
        family_positions(self.m, self.tau, self.eps, self.x, self.y).0
    }

    pub fn config(&self) -> Result<CollinearConfig> {
        CollinearConfig::from_positions(MassVector::new(&self.masses())?, self.positions().to_vec())
    }
}

/// Normalized center-of-mass positions and `alpha`.
fn family_positions(m: f64, tau: f64, eps: f64, x: f64, y: f64) -> ([f64; 4], f64) {
    let w = family_masses(m, tau, eps);
    let q = [0.0, x, y, 1.0];
    let qc: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
    let inv_alpha_sq: f64 = w.iter().zip(&q).map(|(a, b)| a * (b - qc).powi(2)).sum();
    let alpha = inv_alpha_sq.powf(-0.5);
    (q.map(|v| (v - qc) * alpha), alpha)
}

fn potential(w: &[f64; 4], a: &[f64; 4]) -> f64 {
    let mut u = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            u += w[i] * w[j] / (a[j] - a[i]).abs();
        }
    }
    u
}

/// The `4 x 4` matrix `D` written out entrywise from `(m, tau, eps, x, y, alpha, mu)`.
pub fn build_d_eps(f: &FourBodyFamily) -> DMatrix<f64> {
    let (m, tau, eps, x, y) = (f.m, f.tau, f.eps, f.x, f.y);
    let m4 = 1.0 - m - (1.0 + tau) * eps;
    let a3 = f.alpha.powi(3);
    let yx = (y - x).powi(3);
    let mut d = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            eps / (x.powi(3) * a3),
            tau * eps / (y.powi(3) * a3),
            m4 / a3,
            m / (x.powi(3) * a3),
            0.0,
            tau * eps / (yx * a3),
            m4 / ((1.0 - x).powi(3) * a3),
            m / (y.powi(3) * a3),
            eps / (yx * a3),
            0.0,
            m4 / ((1.0 - y).powi(3) * a3),
            m / a3,
            eps / ((1.0 - x).powi(3) * a3),
            tau * eps / ((1.0 - y).powi(3) * a3),
            0.0,
        ],
    );
    for i in 0..4 {
        let off: f64 = d.row(i).sum();
        d[(i, i)] = f.mu - off;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormBetas {
    pub delta: f64,
    pub delta_tilde: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// `beta_1, beta_2` from the trace and the principal `2 x 2` minors of `D`.
pub fn closed_form_betas(d: &DMatrix<f64>, mu: f64) -> ClosedFormBetas {
    let n = d.nrows();
    let mut off = 0.0;
    let mut minors = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += d[(i, j)];
            }
            if i < j {
                minors += d[(i, i)] * d[(j, j)] - d[(i, j)] * d[(j, i)];
            }
        }
    }
    let delta = off / (2.0 * mu);
    let sum34 = d.trace() - mu;
    let prod34 = minors - mu * sum34;
    let delta_tilde = (sum34 * sum34 - 4.0 * prod34) / (4.0 * mu * mu);
    let root = delta_tilde.max(0.0).sqrt();
    ClosedFormBetas { delta, delta_tilde, beta1: delta - 1.5 - root, beta2: delta - 1.5 + root }
}

const EPS_START: f64 = 1e-3;
const MAX_LOG_STEP: f64 = 0.5; // decades, i.e. factor sqrt(10)

/// State of the continuation in `(s, d)` with `x = s - d eps^{1/3} / 2`,
/// `y = s + d eps^{1/3} / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Seed {
    eps: f64,
    s: f64,
    d: f64,
}

fn scaled_system(m: f64, tau: f64, eps: f64, v: [f64; 2]) -> [f64; 2] {
    let c = eps.cbrt();
    let x = v[0] - 0.5 * v[1] * c;
    let y = v[0] + 0.5 * v[1] * c;
    let g = g_eps(m, tau, eps, x, y);
    let h = h_eps(m, tau, eps, x, y);
    [(g + tau * h) / (1.0 + tau), (h - g) / c]
}

fn newton_sd(m: f64, tau: f64, eps: f64, start: [f64; 2]) -> Result<[f64; 2]> {
    let f = |v: [f64; 2]| scaled_system(m, tau, eps, v);
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut v = start;
    let mut r = f(v);
    for _ in 0..100 {
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let hk = 1e-7 * v[k].abs().max(1.0);
            let mut p = v;
            let mut q = v;
            p[k] += hk;
            q[k] -= hk;
            let (rp, rq) = (f(p), f(q));
            jac[(0, k)] = (rp[0] - rq[0]) / (2.0 * hk);
            jac[(1, k)] = (rp[1] - rq[1]) / (2.0 * hk);
        }
        let step = jac
            .lu()
            .solve(&nalgebra::Vector2::new(-r[0], -r[1]))
            .ok_or_else(|| Error::ContinuationFailure(format!("singular Jacobian at eps = {eps:e}")))?;
        let mut lambda = 1.0;
        let base = norm(r);
        let (mut v_new, mut r_new);
        loop {
            v_new = [v[0] + lambda * step[0], v[1] + lambda * step[1]];
            r_new = f(v_new);
            let admissible = v_new[1] > 0.0 && r_new.iter().all(|c| c.is_finite());
            if admissible && norm(r_new) <= base.max(1e-300) * (1.0 - 1e-4 * lambda) || (admissible && base < 1e-14) {
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-8 {
                break;
            }
        }
        let moved = (lambda * step[0]).abs().max((lambda * step[1]).abs());
        if !(v_new[1] > 0.0) || r_new.iter().any(|c| !c.is_finite()) {
            return Err(Error::ContinuationFailure(format!("Newton left the admissible region at eps = {eps:e}")));
        }
        v = v_new;
        r = r_new;
        if moved <= 1e-15 * v[0].abs().max(v[1].abs()).max(1.0) || norm(r) < 1e-16 {
            break;
        }
    }
    // The second equation is divided by eps^{1/3}, which lifts its roundoff floor.
    if norm(r) > 1e-11f64.max(1e-14 / eps.cbrt()) {
        return Err(Error::ContinuationFailure(format!("residual {:e} at eps = {eps:e}", norm(r))));
    }
    Ok(v)
}

/// Solved family at `min(1e-3, cap / 10)`, started from the limit point.
fn initial_seed(m: f64, tau: f64) -> Result<Seed> {
    let x0 = limit_x0(m)?;
    let beta = beta_limit(m, x0);
    let eps = EPS_START.min(0.1 * (1.0 - m) / (tau + 1.0));
    let v = newton_sd(m, tau, eps, [x0, ((1.0 + tau) / (2.0 * beta + 3.0)).cbrt()])?;
    Ok(Seed { eps, s: v[0], d: v[1] })
}

fn continue_to(m: f64, tau: f64, seed: Seed, eps: f64) -> Result<Seed> {
    let decades = (eps / seed.eps).log10();
    let steps = (decades.abs() / MAX_LOG_STEP).ceil().max(1.0) as usize;
    let mut cur = seed;
    for k in 1..=steps {
        let e_k = seed.eps * 10f64.powf(decades * k as f64 / steps as f64);
        let e_k = if k == steps { eps } else { e_k };
        let v = newton_sd(m, tau, e_k, [cur.s, cur.d])?;
        cur = Seed { eps: e_k, s: v[0], d: v[1] };
    }
    Ok(cur)
}

fn finish(m: f64, tau: f64, seed: Seed) -> Result<FourBodyFamily> {
    let eps = seed.eps;
    let c = eps.cbrt();
    let x = seed.s - 0.5 * seed.d * c;
    let y = seed.s + 0.5 * seed.d * c;
    if !(0.0 < x && x < y && y < 1.0) {
        return Err(Error::ContinuationFailure(format!("station ordering violated: x = {x}, y = {y}")));
    }
    let w = family_masses(m, tau, eps);
    if w.iter().any(|v| *v <= 0.0) {
        return Err(Error::ContinuationFailure(format!("non-positive mass in {w:?}")));
    }
    let (a, alpha) = family_positions(m, tau, eps, x, y);
    let mu = potential(&w, &a);
    let mut fam = FourBodyFamily {
        m,
        tau,
        eps,
        x,
        y,
        alpha,
        mu,
        delta: 0.0,
        delta_tilde: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        g_residual: g_eps(m, tau, eps, x, y),
        h_residual: h_eps(m, tau, eps, x, y),
    };
    let cf = closed_form_betas(&build_d_eps(&fam), mu);
    fam.delta = cf.delta;
    fam.delta_tilde = cf.delta_tilde;
    fam.beta1 = cf.beta1;
    fam.beta2 = cf.beta2;
    Ok(fam)
}

/// Solves `g_eps = h_eps = 0` by continuation in `eps` from `min(1e-3, cap / 10)`.
pub fn solve_family(m: f64, tau: f64, eps: f64) -> Result<FourBodyFamily> {
    check_eps(m, tau, eps)?;
    let seed = continue_to(m, tau, initial_seed(m, tau)?, eps)?;
    finish(m, tau, seed)
}

/// Families along `eps_values`, each continued from the previous one.
pub fn epsilon_sweep(m: f64, tau: f64, eps_values: &[f64]) -> Result<Vec<FourBodyFamily>> {
    let mut seed = initial_seed(m, tau)?;
    let mut out = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        check_eps(m, tau, eps)?;
        seed = continue_to(m, tau, seed, eps)?;
        out.push(finish(m, tau, seed)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourBodyLimit {
    pub m: f64,
    pub tau: f64,
    pub x0: f64,
    pub alpha0: f64,
    pub mu0: f64,
    pub beta: f64,
    pub beta1_0: f64,
    pub beta2_0: f64,
    /// `D_0` row by row.
    pub d0: [[f64; 4]; 4],
    /// Real parts of the eigenvalues of `D_0`, descending.
    pub d0_eigenvalues: [f64; 4],
}

pub fn limit_quantities(m: f64, tau: f64) -> Result<FourBodyLimit> {
    check_m_tau(m, tau)?;
    let x0 = limit_x0(m)?;
    let alpha0 = (m * (1.0 - m)).powf(-0.5);
    let mu0 = alpha0.powi(-3);
    let beta = beta_limit(m, x0);
    let k = 2.0 * beta + 3.0;
    let p = m / x0.powi(3);
    let q = (1.0 - m) / (1.0 - x0).powi(3);
    let rows = [
        [m, 0.0, 0.0, 1.0 - m],
        [p, -beta - tau * k / (1.0 + tau), tau * k / (1.0 + tau), q],
        [p, k / (1.0 + tau), -beta - k / (1.0 + tau), q],
        [m, 0.0, 0.0, 1.0 - m],
    ];
    let d0 = rows.map(|r| r.map(|v| v * mu0));
    let mat = DMatrix::from_fn(4, 4, |i, j| d0[i][j]);
    let mut ev: Vec<f64> = mat.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(FourBodyLimit {
        m,
        tau,
        x0,
        alpha0,
        mu0,
        beta,
        beta1_0: beta,
        beta2_0: 3.0 * (beta + 1.0),
        d0,
        d0_eigenvalues: [ev[0], ev[1], ev[2], ev[3]],
    })
}

/// Restricted effective potential around the two primaries at
/// `a_1 = -(1-m) alpha0` and `a_4 = m alpha0`.
pub fn v2_potential(m: f64, q: [f64; 2]) -> f64 {
    let alpha0 = (m * (1.0 - m)).powf(-0.5);
    let r1 = (q[0] + (1.0 - m) * alpha0).hypot(q[1]);
    let r4 = (q[0] - m * alpha0).hypot(q[1]);
    m / r1 + (1.0 - m) / r4 + 0.5 * alpha0.powi(-3) * (q[0] * q[0] + q[1] * q[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiaHessian {
    /// Evaluation point, the limit station position in the center-of-mass frame.
    pub point: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    pub expected: [[f64; 2]; 2],
}

/// Second derivatives of `V_2` at the limit station, written out term by term.
pub fn xia_hessian_check(m: f64) -> Result<XiaHessian> {
    let x0 = limit_x0(m)?;
    let beta = beta_limit(m, x0);
    let alpha0 = (m * (1.0 - m)).powf(-0.5);
    let point = [(m + x0 - 1.0) * alpha0, 0.0];
    let (qx, qy) = (point[0], point[1]);
    let a1 = -(1.0 - m) * alpha0;
    let a4 = m * alpha0;
    let r1 = (a1 - qx).hypot(qy);
    let r4 = (a4 - qx).hypot(qy);
    let base = -m / r1.powi(3) - (1.0 - m) / r4.powi(3) + alpha0.powi(-3);
    let xx = base + 3.0 * (m * (a1 - qx).powi(2) / r1.powi(5) + (1.0 - m) * (a4 - qx).powi(2) / r4.powi(5));
    let xy = -3.0 * (m * (a1 - qx) * qy / r1.powi(5) + (1.0 - m) * (a4 - qx) * qy / r4.powi(5));
    let yy = base + 3.0 * (m * qy * qy / r1.powi(5) + (1.0 - m) * qy * qy / r4.powi(5));
    let a3 = alpha0.powi(-3);
    Ok(XiaHessian {
        point,
        hessian: [[xx, xy], [xy, yy]],
        expected: [[(2.0 * beta + 3.0) * a3, 0.0], [0.0, -beta * a3]],
    })
}

/// Earth mass in kg.
pub const EARTH_MASS: f64 = 5.97237e24;
/// Moon mass in kg.
pub const MOON_MASS: f64 = 7.342e22;
/// Earth-Moon distance in km.
pub const EARTH_MOON_DISTANCE_KM: f64 = 384405.0;
/// Eccentricity of the lunar orbit.
pub const MOON_ECCENTRICITY: f64 = 0.0549;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssmValues {
    pub m: f64,
    pub x0: f64,
    pub station_distance_km: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl EssmValues {
    fn from_m_x0(m: f64, x0: f64) -> Self {
        let beta = beta_limit(m, x0);
        EssmValues {
            m,
            x0,
            station_distance_km: EARTH_MOON_DISTANCE_KM * (1.0 - x0),
            beta1: beta,
            beta2: 3.0 * (beta + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interleaving {
    pub lower: Resonance,
    pub value: f64,
    pub upper: Resonance,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssmReport {
    pub earth_mass_kg: f64,
    pub moon_mass_kg: f64,
    pub distance_km: f64,
    pub eccentricity: f64,
    /// Unrounded chain from the physical constants.
    pub full_precision: EssmValues,
    /// Hand-computation chain: `m` rounded to four decimals, `x0` solved and
    /// rounded to four decimals, everything else from those.
    pub four_decimal: EssmValues,
    pub resonances: Vec<Resonance>,
    pub interleavings: Vec<Interleaving>,
    /// Patterns of the two essential blocks at the lunar eccentricity.
    pub block_patterns: Vec<StabilityPattern>,
    pub pattern: String,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub fn essm_report() -> Result<EssmReport> {
    let m = EARTH_MASS / (EARTH_MASS + MOON_MASS);
    let full = EssmValues::from_m_x0(m, limit_x0(m)?);
    let m4 = round4(m);
    let worked = EssmValues::from_m_x0(m4, round4(limit_x0(m4)?));

    let resonances = monodromy::resonance_betas(8)?;
    let at = |index: f64| resonances.iter().find(|r| r.index == index).copied();
    let mut interleavings = Vec::new();
    for (lo, value, hi) in [(2.0, worked.beta1, 2.5), (4.0, worked.beta2, 4.5)] {
        if let (Some(lower), Some(upper)) = (at(lo), at(hi)) {
            interleavings.push(Interleaving { lower, value, upper, holds: lower.beta < value && value < upper.beta });
        }
    }

    let mut block_patterns = Vec::new();
    for beta in [worked.beta1, worked.beta2] {
        let res = monodromy::integrate_monodromy(&LinearizedBlock::essential(beta, MOON_ECCENTRICITY)?, monodromy::DEFAULT_TOL)?;
        block_patterns.push(monodromy::classify(&res, 1e-6)?);
    }
    let theta = |p: &StabilityPattern| {
        p.factors.iter().find_map(|f| match f {
            Factor::Elliptic { theta } => Some(*theta),
            _ => None,
        })
    };
    Ok(EssmReport {
        earth_mass_kg: EARTH_MASS,
        moon_mass_kg: MOON_MASS,
        distance_km: EARTH_MOON_DISTANCE_KM,
        eccentricity: MOON_ECCENTRICITY,
        full_precision: full,
        four_decimal: worked,
        resonances,
        interleavings,
        pattern: block_patterns.iter().map(StabilityPattern::code).collect(),
        theta1: theta(&block_patterns[0]),
        theta2: theta(&block_patterns[1]),
        block_patterns,
    })
}
