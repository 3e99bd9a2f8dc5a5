use moulton_core::monodromy::{
    self, block_coefficient, classify, integrate_full_monodromy, integrate_monodromy, resonance_betas, stability_scan,
    symplectic_j, Axis, CellOutcome, Factor, LinearizedBlock, ScanOptions,
};
use moulton_core::par::Execution;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn exp_oracle(beta: f64) -> DMatrix<f64> {
    let blk = LinearizedBlock::essential(beta, 0.0).unwrap();
    (symplectic_j(4) * block_coefficient(&blk, 0.0) * (2.0 * PI)).exp()
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[test]
fn circular_period_map_matches_matrix_exponential() {
    for beta in [0.0, 1.0, 4.1481, 15.4442] {
        let res = integrate_monodromy(&LinearizedBlock::essential(beta, 0.0).unwrap(), 1e-12).unwrap();
        let d = rel_diff(&res.gamma, &exp_oracle(beta));
        assert!(d < 1e-9, "beta = {beta}: relative deviation {d:e}");
    }
}

#[test]
fn circular_kepler_multipliers_are_one() {
    let res = integrate_monodromy(&LinearizedBlock::kepler(0.0).unwrap(), 1e-12).unwrap();
    for rho in &res.multipliers {
        assert!((rho - 1.0).norm() < 1e-6, "{rho}");
    }
    assert_eq!(classify(&res, 1e-6).unwrap().code(), "D+D+");
}

#[test]
fn random_blocks_are_symplectic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let beta = rng.random_range(0.0..20.0);
        let e = rng.random_range(0.0..0.9);
        let res = integrate_monodromy(&LinearizedBlock::essential(beta, e).unwrap(), monodromy::DEFAULT_TOL).unwrap();
        assert!(res.symplectic_residual <= 1e-8, "beta {beta} e {e}: {:e}", res.symplectic_residual);
        assert!(res.segment_symplectic_residual <= 1e-8);
        assert!((res.det - 1.0).abs() <= 1e-8);
        for rho in &res.multipliers {
            let best = res.multipliers.iter().map(|r| (rho * r - 1.0).norm()).fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-6, "beta {beta} e {e}: {rho} unpaired in {:?}", res.multipliers);
        }
    }
}

#[test]
fn essm_blocks_are_elliptic_hyperbolic() {
    for beta in [4.1481, 15.4442] {
        let res = integrate_monodromy(&LinearizedBlock::essential(beta, 0.0549).unwrap(), 1e-11).unwrap();
        let p = classify(&res, 1e-6).unwrap();
        assert_eq!(p.code(), "EH", "beta {beta}: {:?}", res.multipliers);
        assert!(matches!(p.factors[0], Factor::Elliptic { theta } if theta > 0.0 && theta < PI));
    }
}

fn match_multisets(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut rest = b.to_vec();
    let mut worst: f64 = 0.0;
    for x in a {
        let (i, d) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm() / x.norm().max(1.0)))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        worst = worst.max(d);
        rest.swap_remove(i);
    }
    worst
}

#[test]
fn full_system_is_union_of_blocks() {
    let betas = [4.1481, 15.4442];
    let e = 0.0549;
    let full = integrate_full_monodromy(&betas, e, 1e-12).unwrap();
    let mut union = integrate_monodromy(&LinearizedBlock::kepler(e).unwrap(), 1e-12).unwrap().multipliers;
    for b in betas {
        union.extend(integrate_monodromy(&LinearizedBlock::essential(b, e).unwrap(), 1e-12).unwrap().multipliers);
    }
    let d = match_multisets(&full.multipliers, &union);
    assert!(d < 1e-7, "deviation {d:e}\nfull {:?}\nunion {union:?}", full.multipliers);
}

/// `omega = k` on the circular block: `8 b^2 + (12 - 4k^2) b + 1 - (2k^2 - 1)^2 = 0`.
fn resonance_oracle(k: f64) -> f64 {
    let (a, b, c) = (8.0, 12.0 - 4.0 * k * k, 1.0 - (2.0 * k * k - 1.0).powi(2));
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

#[test]
fn resonances_match_closed_form_and_reference() {
    let res = resonance_betas(8).unwrap();
    assert_eq!(res.len(), 8);
    assert_eq!(res[0].beta, 0.0);
    for r in &res[1..] {
        assert!((r.beta - resonance_oracle(r.index)).abs() < 1e-9, "{r:?}");
    }
    assert!(((1.0 + 97f64.sqrt()) / 4.0 - res[2].beta).abs() < 1e-9);
    for (k, want) in [(2.0, 2.7122), (2.5, 4.9437), (4.0, 14.6764), (4.5, 18.9243)] {
        let r = res.iter().find(|r| r.index == k).unwrap();
        assert!((r.beta - want).abs() < 1e-3, "{r:?}");
        assert_eq!(r.multiplier, if k.fract() == 0.0 { 1 } else { -1 });
    }
    assert!(res.windows(2).all(|w| w[0].beta < w[1].beta));
    assert!(resonance_betas(9).is_err());
}

#[test]
fn resonant_block_has_unit_multiplier() {
    let b2 = resonance_oracle(2.0);
    let res = integrate_monodromy(&LinearizedBlock::essential(b2, 0.0).unwrap(), 1e-12).unwrap();
    assert!(res.multipliers.iter().any(|z| (z - 1.0).norm() < 1e-5), "{:?}", res.multipliers);
    let b52 = resonance_oracle(2.5);
    let res = integrate_monodromy(&LinearizedBlock::essential(b52, 0.0).unwrap(), 1e-12).unwrap();
    assert!(res.multipliers.iter().any(|z| (z + 1.0).norm() < 1e-5), "{:?}", res.multipliers);
}

#[test]
fn multipliers_vary_continuously_in_e() {
    let beta = 4.1481;
    let mut prev: Option<Vec<Complex64>> = None;
    for k in 0..20 {
        let e = 0.05 + 1e-3 * k as f64;
        let cur = integrate_monodromy(&LinearizedBlock::essential(beta, e).unwrap(), 1e-11).unwrap().multipliers;
        if let Some(p) = &prev {
            let jump = match_multisets(&cur, p);
            assert!(jump < 0.1, "jump {jump} at e = {e}");
        }
        prev = Some(cur);
    }
}

#[test]
fn scan_is_deterministic_and_ordered() {
    let betas = Axis::new(0.0, 5.0, 3).unwrap();
    let eccs = Axis::new(0.0, 0.5, 2).unwrap();
    let seq = stability_scan(&betas, &eccs, &ScanOptions { execution: Execution::Sequential, ..Default::default() }).unwrap();
    let par = stability_scan(&betas, &eccs, &ScanOptions { execution: Execution::Parallel, ..Default::default() }).unwrap();
    assert_eq!(seq, par);
    let coords: Vec<(f64, f64)> = seq.iter().map(|c| (c.beta, c.e)).collect();
    assert_eq!(coords, vec![(0.0, 0.0), (0.0, 0.5), (2.5, 0.0), (2.5, 0.5), (5.0, 0.0), (5.0, 0.5)]);
}

#[test]
fn beta_zero_column_is_degenerate() {
    let cells = stability_scan(&Axis::new(0.0, 0.0, 1).unwrap(), &Axis::new(0.0, 0.9, 4).unwrap(), &ScanOptions::default()).unwrap();
    for c in cells {
        match c.outcome {
            CellOutcome::Classified { pattern, .. } => assert_eq!(pattern.code(), "D+D+", "e = {}", c.e),
            CellOutcome::Failed { error } => panic!("e = {}: {error}", c.e),
        }
    }
}

#[test]
fn circular_row_degenerates_near_resonance() {
    let b2 = resonance_oracle(2.0);
    let step = 0.01;
    let axis = Axis::new(b2 - 2.0 * step, b2 + 2.0 * step, 5).unwrap();
    let cells = stability_scan(&axis, &Axis::new(0.0, 0.0, 1).unwrap(), &ScanOptions::default()).unwrap();
    let hit = cells.iter().any(|c| match &c.outcome {
        CellOutcome::Classified { pattern, .. } => pattern.factors.iter().any(|f| matches!(f, Factor::Degenerate { .. })),
        CellOutcome::Failed { .. } => false,
    });
    assert!(hit, "{cells:?}");
}
