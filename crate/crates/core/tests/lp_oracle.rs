mod common;

use common::{lp_oracle_sweep, project_by_grid, rayleigh_capacity_quadrature};
use d2d_bandit::lp::project_l2_onto_l1_ball;
use d2d_bandit::special::rayleigh_mean_log2_capacity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_lps_match_vertex_enumeration() {
    let (worst, mismatches, infeasible) = lp_oracle_sweep(100, 7);
    assert_eq!(mismatches, 0);
    assert!(worst <= 1e-8, "worst gap {worst:e}");
    assert!(infeasible > 0 && infeasible < 100, "{infeasible} infeasible instances");
}

#[test]
fn projection_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let d = rng.gen_range(2..=3);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let radius = rng.gen_range(0.1..1.5);
        let fast = project_l2_onto_l1_ball(&v, radius);
        let slow = project_by_grid(&v, radius);
        let gap = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
        assert!(gap <= 1e-4, "v={v:?} r={radius}: {fast:?} vs {slow:?}");
    }
}

#[test]
fn capacity_closed_form_matches_quadrature() {
    for snr in [0.1, 0.5, 1.0, 4.0, 20.0] {
        let a = rayleigh_mean_log2_capacity(snr);
        let b = rayleigh_capacity_quadrature(snr);
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "snr {snr}: {a} vs {b}");
    }
}
