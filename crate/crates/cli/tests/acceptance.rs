//! Acceptance criteria 1-8, one status line each.
//!
//! Lines are written to stderr directly so they survive output capture.
//! The test fails if any criterion fails.

use moulton_cli::verify::{decoupling_suite, spectrum_suite, DECOUPLING_TOL, EIGEN_TOL, ORTHONORMALITY_TOL};
use moulton_core::cc_core::{beta_three_body, solve_collinear_cc, MassVector};
use moulton_core::fourbody::{epsilon_sweep, limit_quantities, solve_family, EssmReport};
use moulton_core::monodromy::{
    block_coefficient, integrate_full_monodromy, integrate_monodromy, resonance_betas, symplectic_j, LinearizedBlock,
    DEFAULT_TOL,
};
use moulton_core::spectral::spectrum_and_betas;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

const SEED: u64 = 20_261_019;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let dt = t.elapsed();
    let in_time = limit.is_none_or(|l| dt < l);
    let pass = out.pass && in_time;
    let budget = limit.map(|l| format!(" (limit {:.0} s)", l.as_secs_f64())).unwrap_or_default();
    let line = format!(
        "criterion {id} {} {name}: {}; runtime {:.3} s{budget}\n",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        dt.as_secs_f64()
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    pass
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn essm_via_cli() -> EssmReport {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = moulton_cli::run(["moulton-stab", "essm"], &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    serde_json::from_slice(&out).unwrap()
}

fn c1_essm() -> Outcome {
    let v = essm_via_cli().four_decimal;
    let pass = within(v.m, 0.9879, 1e-4)
        && within(v.x0, 0.8493, 5e-4)
        && within(v.station_distance_km, 57930.0, 50.0)
        && within(v.beta1, 4.1481, 1e-3)
        && within(v.beta2, 15.4442, 1e-3);
    check(
        pass,
        format!(
            "m={:.6} (tol 1e-4), x0={:.6} (tol 5e-4), d={:.2} km (tol 50), beta1={:.6}, beta2={:.6} (tol 1e-3)",
            v.m, v.x0, v.station_distance_km, v.beta1, v.beta2
        ),
    )
}

/// `omega = k` on the circular block: `8 b^2 + (12 - 4k^2) b + 1 - (2k^2 - 1)^2 = 0`.
fn resonance_oracle(k: f64) -> f64 {
    let (a, b, c) = (8.0, 12.0 - 4.0 * k * k, 1.0 - (2.0 * k * k - 1.0).powi(2));
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

fn c2_resonances() -> Outcome {
    let res = resonance_betas(8).unwrap();
    let get = |k: f64| res.iter().find(|r| r.index == k).map(|r| r.beta).unwrap_or(f64::NAN);
    let mut worst_ref = 0.0f64;
    for (k, want) in [(2.0, 2.7122), (2.5, 4.9437), (4.0, 14.6764), (4.5, 18.9243)] {
        worst_ref = worst_ref.max((get(k) - want).abs());
    }
    let worst_oracle = res[1..].iter().map(|r| (r.beta - resonance_oracle(r.index)).abs()).fold(0.0, f64::max);
    let v = essm_via_cli().four_decimal;
    let interleave = get(2.0) < v.beta1 && v.beta1 < get(2.5) && get(4.0) < v.beta2 && v.beta2 < get(4.5);
    check(
        worst_ref <= 1e-3 && interleave && worst_oracle <= 1e-9,
        format!(
            "max |beta_k - reference| = {worst_ref:.2e} (tol 1e-3), max |beta_k - closed form| = {worst_oracle:.2e} (tol 1e-9), \
             {:.4} < {:.4} < {:.4} and {:.4} < {:.4} < {:.4}: {interleave}",
            get(2.0),
            v.beta1,
            get(2.5),
            get(4.0),
            v.beta2,
            get(4.5)
        ),
    )
}

fn c3_spectrum() -> Outcome {
    let s = spectrum_suite(SEED, 200);
    check(
        s.passed() && s.trials == 200,
        format!(
            "{} mass vectors, n in 3..=8, {} failures; |lambda1-mu| {:.1e}, |lambda2| {:.1e}, max rest {:.2e} (tol {EIGEN_TOL:e}), \
             min beta {:.3e} (floor -1e-12), M-orthonormality {:.1e} (tol {ORTHONORMALITY_TOL:e})",
            s.trials, s.failures, s.lambda1_deviation, s.lambda2_abs, s.max_rest, s.min_beta, s.orthonormality
        ),
    )
}

fn c4_decoupling() -> Outcome {
    let s = decoupling_suite(SEED, 1);
    check(
        s.passed() && s.cases == 27,
        format!(
            "{} cases (n 3,4,5 x e 0,0.3,0.7 x theta 0,pi/3,pi), off-block {:.1e}, block deviation {:.1e} (tol {DECOUPLING_TOL:e})",
            s.cases, s.max_off_block, s.max_block_deviation
        ),
    )
}

fn c5_monodromy() -> Outcome {
    let mut worst_exp = 0.0f64;
    for beta in [0.0, 1.0, 4.1481, 15.4442] {
        let blk = LinearizedBlock::essential(beta, 0.0).unwrap();
        let oracle = (symplectic_j(4) * block_coefficient(&blk, 0.0) * (2.0 * PI)).exp();
        let gamma = integrate_monodromy(&blk, 1e-12).unwrap().gamma;
        worst_exp = worst_exp.max((&gamma - &oracle).amax() / oracle.amax().max(1.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_symp, mut worst_seg) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let beta = rng.random_range(0.0..=20.0);
        let e = rng.random_range(0.0..=0.9);
        let r = integrate_monodromy(&LinearizedBlock::essential(beta, e).unwrap(), DEFAULT_TOL).unwrap();
        worst_symp = worst_symp.max(r.symplectic_residual);
        worst_seg = worst_seg.max(r.segment_symplectic_residual);
    }
    check(
        worst_exp <= 1e-9 && worst_symp <= 1e-8,
        format!(
            "exp oracle max|dgamma|/max(1,|gamma|) = {worst_exp:.2e} (tol 1e-9); 100 random blocks, \
             symplectic residual {worst_symp:.2e} (tol 1e-8), per-segment {worst_seg:.2e}"
        ),
    )
}

fn match_multisets(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut rest = b.to_vec();
    let mut worst = 0.0f64;
    for x in a {
        let Some((i, d)) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm() / x.norm().max(1.0)))
            .min_by(|p, q| p.1.total_cmp(&q.1))
        else {
            return f64::INFINITY;
        };
        worst = worst.max(d);
        rest.swap_remove(i);
    }
    if rest.is_empty() {
        worst
    } else {
        f64::INFINITY
    }
}

fn c6_full_system() -> Outcome {
    let v = essm_via_cli().four_decimal;
    let e = 0.0549;
    let full = integrate_full_monodromy(&[v.beta1, v.beta2], e, 1e-12).unwrap();
    let mut union = integrate_monodromy(&LinearizedBlock::kepler(e).unwrap(), 1e-12).unwrap().multipliers;
    for b in [v.beta1, v.beta2] {
        union.extend(integrate_monodromy(&LinearizedBlock::essential(b, e).unwrap(), 1e-12).unwrap().multipliers);
    }
    let d = match_multisets(&full.multipliers, &union);
    check(
        d <= 1e-7 && full.multipliers.len() == 12,
        format!("12 multipliers vs union of 3 blocks, max |rho - rho'|/max(1,|rho|) = {d:.2e} (tol 1e-7)"),
    )
}

fn c7_fourbody() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(0.5..0.99);
        let tau = rng.random_range(0.2..5.0);
        let eps = 10f64.powf(rng.random_range(-6.0..-3.0));
        let fam = solve_family(m, tau, eps).unwrap();
        let sp = spectrum_and_betas(&fam.config().unwrap()).unwrap();
        worst = worst.max((fam.beta1 - sp.betas[0]).abs()).max((fam.beta2 - sp.betas[1]).abs());
    }

    let (m, tau) = (0.9879, 1.0);
    let eps: Vec<f64> = (3..=9).map(|k| 10f64.powi(-k)).collect();
    let lim = limit_quantities(m, tau).unwrap();
    let fams = epsilon_sweep(m, tau, &eps).unwrap();
    let e1: Vec<f64> = fams.iter().map(|f| (f.beta1 - lim.beta1_0).abs()).collect();
    let e2: Vec<f64> = fams.iter().map(|f| (f.beta2 - lim.beta2_0).abs()).collect();
    let mono = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    let fmt = |e: &[f64]| e.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" ");
    let last = e1[6].max(e2[6]);
    check(
        worst <= 1e-8 && mono(&e1) && mono(&e2) && last <= 1e-2,
        format!(
            "20 samples closed form vs eigen max {worst:.2e} (tol 1e-8); sweep m=0.9879 tau=1 eps 1e-3..1e-9: \
             |dbeta1| [{}] monotone {}, |dbeta2| [{}] monotone {}, at 1e-9 {last:.2e} (tol 1e-2)",
            fmt(&e1),
            mono(&e1),
            fmt(&e2),
            mono(&e2)
        ),
    )
}

fn c8_equal_masses() -> Outcome {
    let m = MassVector::new(&[1.0, 1.0, 1.0]).unwrap();
    let quintic = beta_three_body(&m).unwrap();
    let spectral = spectrum_and_betas(&solve_collinear_cc(&m).unwrap()).unwrap().betas[0];
    let d = (quintic - 1.4).abs().max((spectral - 1.4).abs());
    check(d <= 1e-10, format!("quintic {quintic:.15}, spectral {spectral:.15}, max |beta - 7/5| = {d:.1e} (tol 1e-10)"))
}

#[test]
fn acceptance_criteria() {
    let s = |x: u64| Some(Duration::from_secs(x));
    let results = [
        report(1, "ESSM regression", s(1), c1_essm),
        report(2, "resonance values and interleaving", s(5), c2_resonances),
        report(3, "reduction spectrum suite", s(10), c3_spectrum),
        report(4, "Hessian decoupling", s(30), c4_decoupling),
        report(5, "monodromy oracle and symplecticity", s(20), c5_monodromy),
        report(6, "full system vs block union", None, c6_full_system),
        report(7, "four-body closed form and sweep", None, c7_fourbody),
        report(8, "equal-mass cross-check", None, c8_equal_masses),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
