//! Library values against exact arithmetic and an independent quadrature.

mod common;

use common::{hermite_function_exact, GaussHermite};
use hermite_frames::hermite::{hermite_value, hermite_zeros};

#[test]
fn oracle_rule_integrates_gaussian() {
    for n in [16, 64, 300, 600] {
        let g = GaussHermite::new(n);
        let total: f64 = g.nodes.iter().zip(&g.lambda).map(|(x, l)| l * (-x * x).exp()).sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-13, "n = {n}: {total}");
    }
}

#[test]
fn hermite_200_matches_exact_recurrence() {
    let want = hermite_function_exact(200, 13, 10);
    let got = hermite_value(200, 1.3);
    assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
    for (k, num, den) in [(0, 1, 2), (1, -7, 3), (37, 5, 1), (120, -31, 4)] {
        let want = hermite_function_exact(k, num, den);
        let got = hermite_value(k as usize, num as f64 / den as f64);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300), "k = {k}");
    }
}

#[test]
fn zeros_match_oracle_nodes() {
    for m in [2usize, 10, 72, 300] {
        let z = hermite_zeros(m).unwrap();
        let mut oracle = GaussHermite::new(m).nodes;
        oracle.sort_by(f64::total_cmp);
        for (a, b) in z.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0), "m = {m}: {a} vs {b}");
        }
    }
}
