use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smlm_l0::operator::{DenseOperator, ForwardOperator, LinearOperator, OperatorSpec, PsfSpec, SpectralEstimates};
use smlm_l0::sim::rasterize;
use smlm_l0::solver::{
    coupling_gap, l0_norm, l0_reformulation, l0_reformulation_value, rho_bound, solve, RhoFinal, SolverConfig,
};
use smlm_l0::{fine_index_to_nm, GridGeometry, Molecule};

/// Smallest `||u||_1` over the vertices of `[-1, 1]^n` (and the zero
/// coordinate) that satisfy `<u, x> = ||x||_1`.
fn enumerate_l0(x: &[f64]) -> f64 {
    let n = x.len();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let u: Vec<f64> = (0..n)
            .map(|_| {
                let v = (c % 3) as f64 - 1.0;
                c /= 3;
                v
            })
            .collect();
        let inner: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        if (inner - l1).abs() <= 1e-12 * l1.max(1.0) {
            best = best.min(u.iter().map(|v| v.abs()).sum());
        }
    }
    best
}

fn sparse_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -10.0..10.0f64], 1..=7)
}

proptest! {
    #[test]
    fn reformulation_matches_enumeration(x in sparse_vec()) {
        let count = x.iter().filter(|v| **v != 0.0).count() as f64;
        prop_assert_eq!(enumerate_l0(&x), count);
        prop_assert_eq!(l0_reformulation_value(&x), count);
    }

    #[test]
    fn reformulation_certificate_is_feasible(x in sparse_vec()) {
        let (value, u) = l0_reformulation(&x);
        prop_assert!(u.iter().all(|v| v.abs() <= 1.0));
        let inner: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        prop_assert!((inner - l1).abs() <= 1e-12 * l1.max(1.0));
        prop_assert_eq!(value, u.iter().map(|v| v.abs()).sum::<f64>());
    }
}

fn isbi16() -> ForwardOperator {
    let g = GridGeometry::new(16, 4, 100.0).unwrap();
    ForwardOperator::new(OperatorSpec::new(g, PsfSpec::from_fwhm_nm(258.21, 25.0).unwrap()).unwrap())
}

fn random_frame(op: &ForwardOperator, count: usize, noise: f64, seed: u64) -> Vec<f64> {
    let g = *op.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mols: Vec<Molecule> = (0..count)
        .map(|_| {
            let (x_nm, y_nm) = fine_index_to_nm(rng.random_range(4..60), rng.random_range(4..60), &g).unwrap();
            Molecule { x_nm, y_nm, intensity: rng.random_range(300.0..1500.0), frame_index: 0 }
        })
        .collect();
    let mut d = op.apply_vec(&rasterize(&mols, &g).unwrap().to_flat());
    d.iter_mut().for_each(|v| *v += noise * rng.random_range(-1.0..1.0));
    d
}

#[test]
fn closed_gap_certifies_the_budget() {
    let op = isbi16();
    let spectral = op.estimate_spectral(1e-10, 100_000).unwrap();
    for seed in 0..3 {
        let d = random_frame(&op, 6, 3.0, seed);
        let cfg = SolverConfig { support_fallback: false, ..SolverConfig::default().with_k(4.0) };
        let out = solve(&op, &d, &spectral, &cfg).unwrap();
        let u_l1: f64 = out.u.iter().map(|v| v.abs()).sum();
        assert!(u_l1 <= 4.0 + 1e-9);
        assert!(out.u.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        assert!(out.x.iter().all(|v| *v >= 0.0));
        if out.gap <= cfg.gap_tol {
            assert!(out.l0 <= 4, "seed {seed}: gap {} but l0 {}", out.gap, out.l0);
        }
        assert_eq!(out.l0, l0_norm(&out.x));
        assert!((out.gap - coupling_gap(&out.x, &out.u)).abs() < 1e-12);
    }
}

#[test]
fn theorem_bound_ends_the_schedule() {
    let op = isbi16();
    let spectral = op.estimate_spectral(1e-10, 100_000).unwrap();
    let d = random_frame(&op, 3, 0.0, 7);
    let cfg = SolverConfig::default().with_k(3.0);
    let out = solve(&op, &d, &spectral, &cfg).unwrap();
    let bound = rho_bound(&op, &d, &spectral).unwrap();
    assert!((out.rho_final / bound - 1.0 - 1e-6).abs() < 1e-12);
    assert!(out.trace.windows(2).all(|w| w[0].rho <= w[1].rho));
    assert_eq!(out.trace[0].rho, cfg.rho0);
    assert!(out.l0 <= 3);
}

#[test]
fn fallback_enforces_the_budget() {
    let op = isbi16();
    let spectral = op.estimate_spectral(1e-10, 100_000).unwrap();
    let d = random_frame(&op, 8, 5.0, 11);
    // a final rho this small leaves the coupling gap open
    let cfg = SolverConfig {
        rho_final: RhoFinal::Value(1e-3),
        ..SolverConfig::default().with_k(5.0)
    };
    let out = solve(&op, &d, &spectral, &cfg).unwrap();
    assert!(out.fallback_applied);
    assert!(out.l0 <= 5);
    assert_eq!(out.gap, 0.0);
    let last = out.trace.last().unwrap();
    assert!(last.fallback && last.l0 == out.l0);
}

#[test]
fn zero_data_gives_zero() {
    let op = isbi16();
    let spectral = op.estimate_spectral(1e-10, 100_000).unwrap();
    let d = vec![0.0; op.output_len()];
    let out = solve(&op, &d, &spectral, &SolverConfig::default().with_k(2.0)).unwrap();
    assert!(out.x.iter().all(|v| *v == 0.0));
    assert_eq!(out.l0, 0);
}

#[test]
fn scalar_problem_with_dense_operator() {
    // A = 1, d = 2, k = 1: the budget is inactive and x = 2
    let op = DenseOperator::identity(1);
    let spectral = SpectralEstimates { sigma1: 1.0, sigma2: 1.0, iterations_used: 0, tolerance: 0.0 };
    let cfg = SolverConfig { fista_tol: 1e-12, ..SolverConfig::default().with_k(1.0) };
    let out = solve(&op, &[2.0], &spectral, &cfg).unwrap();
    assert!((out.x[0] - 2.0).abs() < 1e-6, "{}", out.x[0]);
    assert_eq!(out.gap, 0.0);
}

#[test]
fn budget_of_one_picks_the_stronger_source() {
    // two separated pixels of a dense identity-like operator
    let op = DenseOperator::identity(4);
    let spectral = SpectralEstimates { sigma1: 1.0, sigma2: 1.0, iterations_used: 0, tolerance: 0.0 };
    let cfg = SolverConfig { fista_tol: 1e-12, ..SolverConfig::default().with_k(1.0) };
    let out = solve(&op, &[0.0, 3.0, 0.0, 5.0], &spectral, &cfg).unwrap();
    assert_eq!(out.l0, 1);
    assert!((out.x[3] - 5.0).abs() < 1e-6, "{:?}", out.x);
}
