//! Period maps of the linearized EEM blocks, Floquet multipliers, stability
//! patterns, resonance values and `(beta, e)` scans.
//!
//! Every block is a 4-dimensional system `zeta' = J B(theta) zeta` with
//! `zeta = (Z, z)` (momenta first) and
//!
//! ```text
//! B(theta) = [[I, -J2], [J2, H(theta)]],   J2 = [[0, -1], [1, 0]]
//! ```
//!
//! where `H` is the Kepler or essential position block.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::integrate::{fundamental_segments, Dop853Options, Dop853Stats, SegmentedFundamental, DEFAULT_GROWTH_CAP};
use crate::ms_coords::hessian_blocks_analytic;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    Kepler,
    Essential { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedBlock {
    pub kind: BlockKind,
    pub e: f64,
}

impl LinearizedBlock {
    pub fn kepler(e: f64) -> Result<Self> {
        check_ecc(e)?;
        Ok(LinearizedBlock { kind: BlockKind::Kepler, e })
    }

    pub fn essential(beta: f64, e: f64) -> Result<Self> {
        check_ecc(e)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(LinearizedBlock { kind: BlockKind::Essential { beta }, e })
    }

    fn position_block(&self, theta: f64) -> Matrix2<f64> {
        match self.kind {
            BlockKind::Kepler => hessian_blocks_analytic(&[], self.e, theta)[0],
            BlockKind::Essential { beta } => hessian_blocks_analytic(&[beta], self.e, theta)[1],
        }
    }
}

fn check_ecc(e: f64) -> Result<()> {
    if (0.0..1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eccentricity {e} outside [0, 1)")))
    }
}

/// Standard symplectic matrix `[[0, -I], [I, 0]]` of size `dim`.
pub fn symplectic_j(dim: usize) -> DMatrix<f64> {
    let k = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..k {
        j[(i, k + i)] = -1.0;
        j[(k + i, i)] = 1.0;
    }
    j
}

fn fill_block(b: &mut DMatrix<f64>, k: usize, slot: usize, h: &Matrix2<f64>) {
    let (p, q) = (2 * slot, k + 2 * slot);
    b[(p, p)] = 1.0;
    b[(p + 1, p + 1)] = 1.0;
    // Upper right -J2, lower left J2.
    b[(p, q + 1)] = 1.0;
    b[(p + 1, q)] = -1.0;
    b[(q, p + 1)] = -1.0;
    b[(q + 1, p)] = 1.0;
    for r in 0..2 {
        for c in 0..2 {
            b[(q + r, q + c)] = h[(r, c)];
        }
    }
}

/// `B(theta)` of one block, 4 x 4 symmetric.
pub fn block_coefficient(block: &LinearizedBlock, theta: f64) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(4, 4);
    fill_block(&mut b, 2, 0, &block.position_block(theta));
    b
}

/// `B(theta)` of the whole linearized system for `n = betas.len() + 2`
/// bodies, ordered `(Z, W_1, ..., z, w_1, ...)`.
pub fn assemble_full_b(betas: &[f64], e: f64, theta: f64) -> DMatrix<f64> {
    let blocks = hessian_blocks_analytic(betas, e, theta);
    let k = 2 * blocks.len();
    let mut b = DMatrix::zeros(2 * k, 2 * k);
    for (slot, h) in blocks.iter().enumerate() {
        fill_block(&mut b, k, slot, h);
    }
    b
}

pub const DEFAULT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyResult {
    pub gamma: DMatrix<f64>,
    pub multipliers: Vec<Complex64>,
    /// `max |gamma^T J gamma - J| / max(1, max |gamma|^2)`.
    pub symplectic_residual: f64,
    /// Largest absolute symplectic defect over the well-scaled segment
    /// propagators whose product is `gamma`.
    pub segment_symplectic_residual: f64,
    pub det: f64,
    pub segments: usize,
    pub stats: Dop853Stats,
}

fn check_tol(tol: f64) -> Result<()> {
    if (1e-13..=1e-6).contains(&tol) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("integrator tolerance {tol:e} outside [1e-13, 1e-6]")))
    }
}

/// Period map over `theta in [0, 2 pi]` of one block.
pub fn integrate_monodromy(block: &LinearizedBlock, tol: f64) -> Result<MonodromyResult> {
    check_tol(tol)?;
    let j = symplectic_j(4);
    period_map(|theta| &j * block_coefficient(block, theta), 4, tol)
}

/// Period map of the full `4(n-1)` dimensional linearized system.
pub fn integrate_full_monodromy(betas: &[f64], e: f64, tol: f64) -> Result<MonodromyResult> {
    check_tol(tol)?;
    check_ecc(e)?;
    let dim = 4 * (betas.len() + 1);
    let j = symplectic_j(dim);
    period_map(|theta| &j * assemble_full_b(betas, e, theta), dim, tol)
}

fn period_map(coef: impl Fn(f64) -> DMatrix<f64>, dim: usize, tol: f64) -> Result<MonodromyResult> {
    let opts = Dop853Options::with_tol(tol);
    let seg = fundamental_segments(coef, dim, 0.0, 2.0 * PI, &opts, DEFAULT_GROWTH_CAP)?;
    let gamma = seg.product();
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegratorFailure("non-finite monodromy entry".into()));
    }
    let j = symplectic_j(dim);
    let defect = |g: &DMatrix<f64>| (g.transpose() * &j * g - &j).amax();
    let symplectic_residual = defect(&gamma) / gamma.amax().powi(2).max(1.0);
    let segment_symplectic_residual = seg.factors.iter().map(defect).fold(0.0, f64::max);
    let det = seg.factors.iter().map(|f| f.determinant()).product();
    let multipliers = segmented_eigenvalues(&seg);
    Ok(MonodromyResult {
        gamma,
        multipliers,
        symplectic_residual,
        segment_symplectic_residual,
        det,
        segments: seg.factors.len(),
        stats: seg.stats,
    })
}

/// Eigenvalues of the segment product without forming it.
///
/// Orthogonal iteration is run through the factors (`Phi_k Q_k = Q_{k+1} R_k`)
/// for a fixed number of cycles. Then `Q_0^T gamma Q_0 = S R` with
/// `S = Q_0^T Q_N` and `R = R_{N-1} ... R_0`. Indices of comparable modulus
/// stay coupled in `S` and form contiguous groups; every other coupling has
/// decayed geometrically. The eigenvalues are those of the diagonal blocks
/// `S_GG R_GG`, each of which is well scaled.
pub fn segmented_eigenvalues(seg: &SegmentedFundamental) -> Vec<Complex64> {
    product_eigenvalues(&seg.factors)
}

const ORTHO_CYCLES: usize = 80;
const COUPLING_TOL: f64 = 1e-12;
/// Eigenvalues this close to `+1` or `-1` are reported as their cluster mean.
pub const UNIT_CLUSTER_TOL: f64 = 1e-3;

pub fn product_eigenvalues(factors: &[DMatrix<f64>]) -> Vec<Complex64> {
    let dim = factors[0].nrows();
    // Dense start so decoupled blocks still get sorted by modulus.
    let mut q = DMatrix::<f64>::from_fn(dim, dim, |i, j| ((i * dim + j) as f64 * 0.618_034 + 0.25).sin()).qr().q();
    let mut q0 = q.clone();
    let mut rs: Vec<DMatrix<f64>> = Vec::with_capacity(factors.len());
    for _ in 0..ORTHO_CYCLES {
        q0.copy_from(&q);
        rs.clear();
        for f in factors {
            let qr = (f * &q).qr();
            rs.push(qr.r());
            q = qr.q();
        }
    }
    let s = q0.transpose() * &q;

    // Diagonal blocks of the quasi-triangular `S`: `reach[j]` is the last row
    // with a nonzero below-diagonal entry in column `j`.
    let mut reach: Vec<usize> = (0..dim).collect();
    for i in 0..dim {
        for j in 0..i {
            if s[(i, j)].abs() > COUPLING_TOL * s.amax() {
                reach[j] = reach[j].max(i);
            }
        }
    }
    let mut out = Vec::with_capacity(dim);
    let mut start = 0;
    while start < dim {
        let mut end = reach[start];
        let mut k = start;
        while k <= end {
            end = end.max(reach[k]);
            k += 1;
        }
        let size = end - start + 1;
        let mut block = DMatrix::<f64>::identity(size, size);
        for r in &rs {
            block = r.view((start, start), (size, size)) * block;
        }
        let t = s.view((start, start), (size, size)) * block;
        out.extend(t.complex_eigenvalues().iter().copied());
        start = end + 1;
    }
    for sign in [1.0, -1.0] {
        average_cluster(&mut out, sign);
    }
    sort_multipliers(out)
}

/// Jordan blocks at `sign` split into an `O(sqrt(eps))` ring; the mean is well conditioned.
fn average_cluster(v: &mut [Complex64], sign: f64) {
    let near: Vec<usize> = (0..v.len()).filter(|&i| (v[i] - sign).norm() < UNIT_CLUSTER_TOL).collect();
    if near.len() < 2 {
        return;
    }
    let mean = near.iter().map(|&i| v[i].re).sum::<f64>() / near.len() as f64;
    for i in near {
        v[i] = Complex64::new(mean, 0.0);
    }
}

fn sort_multipliers(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    v
}

/// One factor of the normal-form decomposition of a symplectic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Factor {
    /// Pair `e^{+-i theta}` on the unit circle, `theta in (0, pi)`.
    Elliptic { theta: f64 },
    /// Real pair `lambda, 1/lambda` with `|lambda| > 1`.
    Hyperbolic { lambda: f64 },
    /// Pair at `+1` or `-1`.
    Degenerate { sign: i8 },
    /// Pair `rho, 1/rho` off both the real axis and the unit circle; the
    /// conjugate pair appears as a second factor.
    Complex { modulus: f64, angle: f64 },
}

impl Factor {
    pub fn code(&self) -> &'static str {
        match self {
            Factor::Elliptic { .. } => "E",
            Factor::Hyperbolic { .. } => "H",
            Factor::Degenerate { sign: 1 } => "D+",
            Factor::Degenerate { .. } => "D-",
            Factor::Complex { .. } => "C",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Factor::Elliptic { .. } => 0,
            Factor::Hyperbolic { .. } => 1,
            Factor::Complex { .. } => 2,
            Factor::Degenerate { sign: 1 } => 3,
            Factor::Degenerate { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPattern {
    pub factors: Vec<Factor>,
}

impl StabilityPattern {
    /// Concatenated factor codes, e.g. `"EH"`.
    pub fn code(&self) -> String {
        self.factors.iter().map(Factor::code).collect()
    }

    pub fn concat(patterns: &[StabilityPattern]) -> StabilityPattern {
        StabilityPattern { factors: patterns.iter().flat_map(|p| p.factors.iter().copied()).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Reciprocal pairing tolerance on `|rho rho' - 1|`.
    pub pair_tol: f64,
    /// `|1 - |rho|| < circle_tol` puts a multiplier on the unit circle.
    pub circle_tol: f64,
    /// `|rho -+ 1| < degenerate_tol` for both members makes a degenerate pair.
    pub degenerate_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { pair_tol: 1e-6, circle_tol: 1e-7, degenerate_tol: 1e-3 }
    }
}

pub fn classify(result: &MonodromyResult, tol: f64) -> Result<StabilityPattern> {
    classify_multipliers(&result.multipliers, &ClassifyOptions { pair_tol: tol, ..ClassifyOptions::default() })
}

pub fn classify_multipliers(multipliers: &[Complex64], opts: &ClassifyOptions) -> Result<StabilityPattern> {
    if !multipliers.len().is_multiple_of(2) {
        return Err(Error::AmbiguousPair(format!("odd number of multipliers ({})", multipliers.len())));
    }
    let mut rest: Vec<Complex64> = multipliers.to_vec();
    let mut factors = Vec::with_capacity(rest.len() / 2);
    while let Some(x) = rest.pop() {
        let (pos, defect) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x * y - 1.0).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::AmbiguousPair(format!("{x} has no partner")))?;
        if defect > opts.pair_tol {
            return Err(Error::AmbiguousPair(format!("{x} has no reciprocal partner; best |rho rho' - 1| = {defect:e}")));
        }
        let y = rest.swap_remove(pos);
        let big = if x.norm() >= y.norm() { x } else { y };
        let near = |z: Complex64, s: f64| (z - s).norm() < opts.degenerate_tol;
        let factor = if near(x, 1.0) && near(y, 1.0) {
            Factor::Degenerate { sign: 1 }
        } else if near(x, -1.0) && near(y, -1.0) {
            Factor::Degenerate { sign: -1 }
        } else if (1.0 - big.norm()).abs() < opts.circle_tol {
            Factor::Elliptic { theta: big.arg().abs() }
        } else if big.im.abs() < opts.circle_tol * big.norm().max(1.0) {
            Factor::Hyperbolic { lambda: big.re }
        } else {
            Factor::Complex { modulus: big.norm(), angle: big.arg() }
        };
        factors.push(factor);
    }
    factors.sort_by_key(Factor::rank);
    Ok(StabilityPattern { factors })
}

/// Largest `|Im|` among the eigenvalues of the constant `J B(beta)` of the
/// circular essential block: the rotation frequency `omega(beta)`.
pub fn circular_frequency(beta: f64) -> f64 {
    let j = symplectic_j(4);
    let b = block_coefficient(&LinearizedBlock { kind: BlockKind::Essential { beta }, e: 0.0 }, 0.0);
    (j * b).complex_eigenvalues().iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// `k` in `hat beta_k`: integer for multiplier `+1`, half-integer for `-1`.
    pub index: f64,
    pub beta: f64,
    pub multiplier: i8,
}

pub const RESONANCE_WINDOW: (f64, f64) = (0.0, 25.0);
const RESONANCE_GRID: usize = 500;

/// The first `count` resonance values of the circular essential block,
/// `hat beta_1 = 0, hat beta_{3/2}, hat beta_2, ...`.
pub fn resonance_betas(count: usize) -> Result<Vec<Resonance>> {
    if count > 8 {
        return Err(Error::InvalidParameter(format!("at most 8 resonances, asked for {count}")));
    }
    let (lo, hi) = RESONANCE_WINDOW;
    let step = (hi - lo) / RESONANCE_GRID as f64;
    let grid: Vec<(f64, f64)> = (0..=RESONANCE_GRID)
        .map(|i| {
            let b = lo + step * i as f64;
            (b, circular_frequency(b))
        })
        .collect();
    (0..count)
        .map(|i| {
            let index = 1.0 + 0.5 * i as f64;
            let f = |b: f64| circular_frequency(b) - index;
            let beta = if let Some(&(b, _)) = grid.iter().find(|(_, w)| (w - index).abs() <= 1e-12) {
                b
            } else {
                let bracket = grid
                    .windows(2)
                    .find(|w| (w[0].1 - index).signum() != (w[1].1 - index).signum())
                    .ok_or_else(|| Error::BracketFailure(format!("omega = {index} not reached for beta in [{lo}, {hi}]")))?;
                bisect(f, bracket[0].0, bracket[1].0, 1e-10)
            };
            Ok(Resonance { index, beta, multiplier: if i % 2 == 0 { 1 } else { -1 } })
        })
        .collect()
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Inclusive, evenly spaced axis of `count` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(start: f64, end: f64, count: usize) -> Result<Self> {
        if count > 500 {
            return Err(Error::InvalidParameter(format!("resolution {count} exceeds 500 per axis")));
        }
        if !(start.is_finite() && end.is_finite()) || end < start {
            return Err(Error::InvalidParameter(format!("axis [{start}, {end}] is not an increasing range")));
        }
        Ok(Axis { start, end, count })
    }

    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Classified { multipliers: Vec<Complex64>, pattern: StabilityPattern },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub beta: f64,
    pub e: f64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub tol: f64,
    pub classify: ClassifyOptions,
    pub execution: Execution,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { tol: DEFAULT_TOL, classify: ClassifyOptions::default(), execution: Execution::default() }
    }
}

pub fn scan_cell(beta: f64, e: f64, opts: &ScanOptions) -> ScanCell {
    let run = || -> Result<CellOutcome> {
        let res = integrate_monodromy(&LinearizedBlock::essential(beta, e)?, opts.tol)?;
        let pattern = classify_multipliers(&res.multipliers, &opts.classify)?;
        Ok(CellOutcome::Classified { multipliers: res.multipliers, pattern })
    };
    let outcome = run().unwrap_or_else(|err| CellOutcome::Failed { error: err.to_string() });
    ScanCell { beta, e, outcome }
}

/// Classified essential-block cells in beta-major order.
pub fn stability_scan(betas: &Axis, eccs: &Axis, opts: &ScanOptions) -> Result<Vec<ScanCell>> {
    if betas.start < 0.0 || betas.end > 50.0 {
        return Err(Error::InvalidParameter(format!("beta range [{}, {}] outside [0, 50]", betas.start, betas.end)));
    }
    if eccs.start < 0.0 || eccs.end > 0.99 {
        return Err(Error::InvalidParameter(format!("eccentricity range [{}, {}] outside [0, 0.99]", eccs.start, eccs.end)));
    }
    let es = eccs.values();
    let points: Vec<(f64, f64)> = betas.values().into_iter().flat_map(|b| es.iter().map(move |&e| (b, e))).collect();
    Ok(par::map(&points, opts.execution, |&(b, e)| scan_cell(b, e, opts)))
}
