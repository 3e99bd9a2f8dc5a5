//! Adaptive Dormand-Prince 8(5,3) integration of linear matrix ODEs.
//!
//! The fundamental solution of `Phi' = A(t) Phi` is propagated in segments:
//! whenever `max |Phi|` passes a growth cap the current segment is closed and
//! the state restarts from the identity. The period map is the ordered
//! product of the segment propagators, which keeps every stored factor well
//! scaled even when the full product grows like `e^35`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
}

impl Dop853Options {
    pub fn with_tol(tol: f64) -> Self {
        Dop853Options { rtol: tol, atol: tol, max_steps: 200_000, h_init: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dop853Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

const SAFE: f64 = 0.9;
const FACC1: f64 = 1.0 / 0.333;
const FACC2: f64 = 1.0 / 6.0;
const EXPO1: f64 = 1.0 / 8.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0` in place.
///
/// After every accepted step `on_accept(t, y)` may rewrite the state.
pub fn dop853<F, C>(
    f: F,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    opts: &Dop853Options,
    mut on_accept: C,
) -> Result<Dop853Stats>
where
    F: Fn(f64, &[f64], &mut [f64]),
    C: FnMut(f64, &mut [f64]),
{
    let n = y.len();
    if !(t1 > t0) {
        return Err(Error::InvalidParameter(format!("integration interval [{t0}, {t1}] is empty")));
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 12];
    let mut ytmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut stats = Dop853Stats::default();
    let mut t = t0;
    let span = t1 - t0;

    f(t, y, &mut k[0]);
    stats.evals += 1;
    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&f, t, y, &k[0], span, opts, &mut stats));
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::IntegratorFailure(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
        }
        let mut last = false;
        if t + 1.01 * h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h.abs() <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::IntegratorFailure(format!("step size underflow at t = {t}")));
        }

        for (s, row) in TABLEAU.iter().enumerate() {
            let stage = s + 1;
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * k[j][i];
                    }
                }
                ytmp[i] = y[i] + h * acc;
            }
            f(t + C[stage] * h, &ytmp, &mut k[stage]);
        }
        stats.evals += 11;
        // `ytmp` now holds the stage-12 argument; k[11] = f(t + h, ytmp).
        for i in 0..n {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                acc += b * k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }

        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let bsum: f64 = B.iter().enumerate().map(|(j, b)| b * k[j][i]).sum();
            let e2 = bsum - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
            err2 += (e2 / sk).powi(2);
            let e1: f64 = ER.iter().enumerate().map(|(j, c)| c * k[j][i]).sum();
            err += (e1 / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
        if !err.is_finite() {
            return Err(Error::IntegratorFailure(format!("non-finite error estimate at t = {t}")));
        }

        let fac11 = err.powf(EXPO1);
        let fac = FACC2.max(FACC1.min(fac11 / SAFE));
        let mut h_new = h / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            // The last stage is not evaluated at y_new, so there is no FSAL reuse.
            on_accept(t, y);
            f(t, y, &mut k[0]);
            stats.evals += 1;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
        } else {
            h_new = h / FACC1.min(fac11 / SAFE);
            last_rejected = true;
            stats.rejected += 1;
        }
        h = h_new;
    }
    Ok(stats)
}

fn initial_step<F>(f: &F, t: f64, y: &[f64], f0: &[f64], span: f64, opts: &Dop853Options, stats: &mut Dop853Stats) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sk: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let dnf = norm(f0);
    let dny = norm(y);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h * b).collect();
    let mut f1 = vec![0.0; n];
    f(t + h, &y1, &mut f1);
    stats.evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = norm(&diff) / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
    (100.0 * h).min(h1).min(span)
}

/// Propagators of `Phi' = A(t) Phi` over consecutive sub-intervals of
/// `[t0, t1]`; the period map is `factors[N-1] * ... * factors[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedFundamental {
    pub factors: Vec<DMatrix<f64>>,
    pub breakpoints: Vec<f64>,
    pub stats: Dop853Stats,
}

impl SegmentedFundamental {
    pub fn product(&self) -> DMatrix<f64> {
        let dim = self.factors[0].nrows();
        self.factors.iter().fold(DMatrix::identity(dim, dim), |acc, f| f * acc)
    }
}

pub const DEFAULT_GROWTH_CAP: f64 = 16.0;

pub fn fundamental_segments<A>(
    coef: A,
    dim: usize,
    t0: f64,
    t1: f64,
    opts: &Dop853Options,
    growth_cap: f64,
) -> Result<SegmentedFundamental>
where
    A: Fn(f64) -> DMatrix<f64>,
{
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let a = coef(t);
        for c in 0..dim {
            for r in 0..dim {
                let mut acc = 0.0;
                for l in 0..dim {
                    acc += a[(r, l)] * y[c * dim + l];
                }
                dy[c * dim + r] = acc;
            }
        }
    };
    let mut y = identity_flat(dim);
    let mut factors = Vec::new();
    let mut breakpoints = vec![t0];
    let stats = dop853(rhs, t0, t1, &mut y, opts, |t, state| {
        let big = state.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if big > growth_cap && t < t1 {
            factors.push(DMatrix::from_column_slice(dim, dim, state));
            breakpoints.push(t);
            state.copy_from_slice(&identity_flat(dim));
        }
    })?;
    factors.push(DMatrix::from_column_slice(dim, dim, &y));
    breakpoints.push(t1);
    Ok(SegmentedFundamental { factors, breakpoints, stats })
}

fn identity_flat(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    v
}

#[allow(clippy::excessive_precision)]
const C: [f64; 13] = [
    0.0,
    0.526001519587677318785587544488E-01,
    0.789002279381515978178381316732E-01,
    0.118350341907227396726757197510E+00,
    0.281649658092772603273242802490E+00,
    0.333333333333333333333333333333E+00,
    0.25E+00,
    0.307692307692307692307692307692E+00,
    0.651282051282051282051282051282E+00,
    0.6E+00,
    0.857142857142857142857142857142E+00,
    1.0,
    1.0,
];

#[allow(clippy::excessive_precision)]
const TABLEAU: [&[f64]; 11] = [
    &[5.26001519587677318785587544488E-2],
    &[1.97250569845378994544595329183E-2, 5.91751709536136983633785987549E-2],
    &[2.95875854768068491816892993775E-2, 0.0, 8.87627564304205475450678981324E-2],
    &[2.41365134159266685502369798665E-1, 0.0, -8.84549479328286085344864962717E-1, 9.24834003261792003115737966543E-1],
    &[3.7037037037037037037037037037E-2, 0.0, 0.0, 1.70828608729473871279604482173E-1, 1.25467687566822425016691814123E-1],
    &[3.7109375E-2, 0.0, 0.0, 1.70252211019544039314978060272E-1, 6.02165389804559606850219397283E-2, -1.7578125E-2],
    &[
        3.70920001185047927108779319836E-2,
        0.0,
        0.0,
        1.70383925712239993810214054705E-1,
        1.07262030446373284651809199168E-1,
        -1.53194377486244017527936158236E-2,
        8.27378916381402288758473766002E-3,
    ],
    &[
        6.24110958716075717114429577812E-1,
        0.0,
        0.0,
        -3.36089262944694129406857109825E0,
        -8.68219346841726006818189891453E-1,
        2.75920996994467083049415600797E1,
        2.01540675504778934086186788979E1,
        -4.34898841810699588477366255144E1,
    ],
    &[
        4.77662536438264365890433908527E-1,
        0.0,
        0.0,
        -2.48811461997166764192642586468E0,
        -5.90290826836842996371446475743E-1,
        2.12300514481811942347288949897E1,
        1.52792336328824235832596922938E1,
        -3.32882109689848629194453265587E1,
        -2.03312017085086261358222928593E-2,
    ],
    &[
        -9.3714243008598732571704021658E-1,
        0.0,
        0.0,
        5.18637242884406370830023853209E0,
        1.09143734899672957818500254654E0,
        -8.14978701074692612513997267357E0,
        -1.85200656599969598641566180701E1,
        2.27394870993505042818970056734E1,
        2.49360555267965238987089396762E0,
        -3.0467644718982195003823669022E0,
    ],
    &[
        2.27331014751653820792359768449E0,
        0.0,
        0.0,
        -1.05344954667372501984066689879E1,
        -2.00087205822486249909675718444E0,
        -1.79589318631187989172765950534E1,
        2.79488845294199600508499808837E1,
        -2.85899827713502369474065508674E0,
        -8.87285693353062954433549289258E0,
        1.23605671757943030647266201528E1,
        6.43392746015763530355970484046E-1,
    ],
];

#[allow(clippy::excessive_precision)]
const B: [f64; 12] = [
    5.42937341165687622380535766363E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566E0,
    1.89151789931450038304281599044E0,
    -5.8012039600105847814672114227E0,
    3.1116436695781989440891606237E-1,
    -1.52160949662516078556178806805E-1,
    2.01365400804030348374776537501E-1,
    4.47106157277725905176885569043E-2,
];

#[allow(clippy::excessive_precision)]
const BHH: [f64; 3] = [
    0.244094488188976377952755905512E+00,
    0.733846688281611857341361741547E+00,
    0.220588235294117647058823529412E-01,
];

#[allow(clippy::excessive_precision)]
const ER: [f64; 12] = [
    0.1312004499419488073250102996E-01,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753E+01,
    -0.4957589496572501915214079952E+00,
    0.1664377182454986536961530415E+01,
    -0.3503288487499736816886487290E+00,
    0.3341791187130174790297318841E+00,
    0.8192320648511571246570742613E-01,
    -0.2235530786388629525884427845E-01,
];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_oscillator_full_period() {
        let mut y = [1.0, 0.0];
        let opts = Dop853Options::with_tol(1e-12);
        let tp = 2.0 * std::f64::consts::PI;
        dop853(|_, y, dy| { dy[0] = y[1]; dy[1] = -y[0]; }, 0.0, tp, &mut y, &opts, |_, _| {}).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11 && y[1].abs() < 1e-11);
    }

    #[test]
    fn exponential_growth_is_segmented() {
        let opts = Dop853Options::with_tol(1e-12);
        let seg = fundamental_segments(|_| DMatrix::from_element(1, 1, 5.0), 1, 0.0, 2.0 * std::f64::consts::PI, &opts, 16.0).unwrap();
        assert!(seg.factors.len() > 5);
        let log_sum: f64 = seg.factors.iter().map(|f| f[(0, 0)].ln()).sum();
        assert_relative_eq!(log_sum, 10.0 * std::f64::consts::PI, max_relative = 1e-11);
        assert!(seg.factors.iter().all(|f| f[(0, 0)] < 16.0 * 2.0));
    }

    #[test]
    fn time_dependent_scalar() {
        // y' = cos(t) y, y(T) = exp(sin T).
        let opts = Dop853Options::with_tol(1e-12);
        let seg = fundamental_segments(|t| DMatrix::from_element(1, 1, t.cos()), 1, 0.0, 3.0, &opts, 16.0).unwrap();
        assert_relative_eq!(seg.product()[(0, 0)], 3.0f64.sin().exp(), max_relative = 1e-11);
    }

    #[test]
    fn empty_interval_rejected() {
        let mut y = [1.0];
        let opts = Dop853Options::with_tol(1e-10);
        assert!(dop853(|_, _, dy| dy[0] = 0.0, 1.0, 1.0, &mut y, &opts, |_, _| {}).is_err());
    }
}
