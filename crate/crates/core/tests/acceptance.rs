//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion outside `EXPECTED_FAILURES` fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::{normal, random_expansion, relative_l2, GaussHermite};
use hermite_frames::embedding::{self, BallPlan, EmbeddingParams, Verdict};
use hermite_frames::expansion::HermiteExpansion;
use hermite_frames::frames;
use hermite_frames::hermite::{hermite_values, hermite_zeros, hermite_zeros_any};
use hermite_frames::multipliers::{kernel_decay_diagnostic, orthogonality_check, MultiplierSystem};
use hermite_frames::norms::{function_norm, sequence_norm, NormOptions, Scale, SpaceParams};
use hermite_frames::tiles::{level_size, verify_geometry, TileGrid};
use hermite_frames::weights::Weight;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const DELTA_STAR: f64 = 0.025;

/// Criteria that fail on this implementation; their numbers are printed and
/// documented in the README.
const EXPECTED_FAILURES: &[u32] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_orthonormality() -> Outcome {
    let start = Instant::now();
    let gh = GaussHermite::new(64);
    let table: Vec<Vec<f64>> = gh.nodes.iter().map(|&x| hermite_values(60, x)).collect();
    let mut worst = 0.0f64;
    for j in 0..=60 {
        for k in 0..=60 {
            let ip: f64 = table.iter().zip(&gh.lambda).map(|(h, l)| l * h[j] * h[k]).sum();
            let delta = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((ip - delta).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-10 && secs < 5.0, format!("max deviation {worst:.2e}, {secs:.2}s"))
}

fn c2_zeros() -> Outcome {
    let z2 = hermite_zeros(2).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let e2 = (z2.as_slice()[0] + r).abs().max((z2.as_slice()[1] - r).abs());
    // 16x⁴ − 48x² + 12 = 0  ⇔  x² = (3 ± √6)/2.
    let s6 = 6f64.sqrt();
    let mut quartic = [
        -((3.0 + s6) / 2.0).sqrt(),
        -((3.0 - s6) / 2.0).sqrt(),
        ((3.0 - s6) / 2.0).sqrt(),
        ((3.0 + s6) / 2.0).sqrt(),
    ];
    quartic.sort_by(f64::total_cmp);
    let z4 = hermite_zeros(4).unwrap();
    let e4 = z4
        .as_slice()
        .iter()
        .zip(&quartic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let top = 2 * level_size(DELTA_STAR, 4);
    let sets: Vec<Vec<f64>> = (1..=top)
        .into_par_iter()
        .map(|m| hermite_zeros_any(m).unwrap().as_slice().to_vec())
        .collect();
    let bad = sets
        .windows(2)
        .filter(|w| {
            let (a, b) = (&w[0], &w[1]);
            b.len() != a.len() + 1 || a.iter().enumerate().any(|(i, &x)| !(b[i] < x && x < b[i + 1]))
        })
        .count();
    outcome(
        e2 < 1e-14 && e4 < 1e-12 && bad == 0,
        format!("m=2 error {e2:.1e}, m=4 error {e4:.1e}, interlacing violations {bad} for m ≤ {top}"),
    )
}

fn c3_cubature() -> Outcome {
    let grid = TileGrid::build(1, DELTA_STAR, 3, false).unwrap();
    let gh = GaussHermite::new(2 * level_size(DELTA_STAR, 3) + 8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let j = i % 4;
        let total = 4 * level_size(DELTA_STAR, j) - 1;
        let df = rng.gen_range(0..=total);
        let f = random_expansion(&mut rng, df);
        let g = random_expansion(&mut rng, total - df);
        let cub = frames::cubature_expansions(&grid, j, &f, &g).unwrap();
        let exact = gh.integrate(|x| f.evaluate(&[x]) * g.evaluate(&[x]));
        worst = worst.max((cub - exact).norm() / (f.l2_norm() * g.l2_norm()));
    }
    outcome(worst < 1e-8, format!("max relative error {worst:.2e} over 50 pairs"))
}

fn c4_tiles() -> Outcome {
    let grid = TileGrid::build(1, DELTA_STAR, 4, true).unwrap();
    let r = verify_geometry(&grid);
    let partition = r.levels.iter().map(|l| l.partition_error).fold(0.0, f64::max);
    let finite = [r.c0, r.c1, r.c2, r.c3].iter().all(|c| c.is_finite() && *c > 0.0)
        && r.c4.map_or(false, |c| c.is_finite() && c > 0.0);
    let stable = r.stability.iter().all(|s| *s <= 2.0);
    outcome(
        partition <= 1e-12 && finite && stable && r.pass,
        format!(
            "partition error {partition:.1e}, constants c0..c3 = {:.3} {:.3} {:.3} {:.3}, c4 = {:?}, stability {:?}, failures {:?}",
            r.c0, r.c1, r.c2, r.c3, r.c4, r.stability, r.failures
        ),
    )
}

fn c5_reconstruction() -> Outcome {
    let start = Instant::now();
    let phi = MultiplierSystem::partition(0.05).unwrap();
    let psi = phi.dual().unwrap();
    let grid = TileGrid::build(1, DELTA_STAR, 5, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let f = random_expansion(&mut rng, 64);
        let s = frames::analyze(&phi, &grid, &f, 3).unwrap();
        let back = frames::synthesize(&psi, &grid, &s).unwrap();
        worst = worst.max(relative_l2(&back, &f));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-8 && secs < 60.0, format!("max relative error {worst:.2e}, {secs:.1}s"))
}

fn line(x: f64, points: usize) -> Vec<Vec<f64>> {
    (0..points)
        .map(|i| vec![-x + 2.0 * x * i as f64 / (points - 1) as f64])
        .collect()
}

fn c6_almost_orthogonality() -> Outcome {
    let phi = MultiplierSystem::partition(0.05).unwrap();
    let psi = phi.dual().unwrap();
    let (mut coeff, mut kernel, mut pairs) = (0.0f64, 0.0f64, 0);
    for j in 0..=7usize {
        for k in 0..=7usize {
            if j.abs_diff(k) < 3 {
                continue;
            }
            let pts = line(1.25 * 2f64.powi(j.max(k) as i32), 64);
            for b in [&phi, &psi] {
                let r = orthogonality_check(&phi, b, j, k, &pts).unwrap();
                coeff = coeff.max(r.coefficient_max);
                kernel = kernel.max(r.kernel_max);
                pairs += 1;
            }
        }
    }
    outcome(
        coeff == 0.0 && kernel < 1e-13,
        format!("{pairs} separated pairs: coefficient max {coeff:e}, kernel max {kernel:e}"),
    )
}

fn c7_kernel_decay() -> Outcome {
    let sys = MultiplierSystem::partition(0.05).unwrap();
    let mut cs = Vec::new();
    let mut thetas = Vec::new();
    let mut holds = true;
    for j in 2..=4usize {
        let x = 1.25 * 5f64.sqrt() * 2f64.powi(j as i32);
        let r = kernel_decay_diagnostic(&sys, j, 6.0, 5.0, &line(x, 200)).unwrap();
        holds &= r.fitted_c.is_finite() && r.max_violation <= 1.0 + 1e-12;
        cs.push(r.fitted_c);
        thetas.push(r.theta);
    }
    let spread = |v: &[f64]| {
        v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (sc, st) = (spread(&cs), spread(&thetas));
    outcome(
        holds && sc <= 4.0 && st <= 4.0,
        format!(
            "C = [{}], ϑ = {thetas:.3?}, C spread {sc:.1}, ϑ spread {st:.2}",
            cs.iter().map(|c| format!("{c:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c8_norm_equivalence() -> Outcome {
    let big_j = 2;
    let grid = TileGrid::build(1, DELTA_STAR, big_j + 2, false).unwrap();
    let systems = [
        MultiplierSystem::partition(0.05).unwrap(),
        MultiplierSystem::partition(0.01).unwrap(),
    ];
    let weights = [Weight::unit(), Weight::gaussian(-1.0).unwrap()];
    let spaces = [(0.0, 2.0, 2.0), (1.0, 2.0, 2.0), (0.5, 1.0, 1.0)];
    let opts = NormOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fs: Vec<HermiteExpansion> = (0..30)
        .map(|_| {
            let d = rng.gen_range(0..=4usize.pow(big_j as u32));
            random_expansion(&mut rng, d)
        })
        .collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for w in &weights {
        for &(a, p, q) in &spaces {
            let params = SpaceParams::new(a, p, q, Scale::Besov).unwrap();
            let bands: Vec<(f64, f64)> = systems
                .iter()
                .map(|sys| {
                    let ratios: Vec<f64> = fs
                        .par_iter()
                        .map(|f| {
                            let s = frames::analyze(sys, &grid, f, big_j).unwrap();
                            sequence_norm(&s, &params, w, &grid).unwrap().value
                                / function_norm(f, sys, &params, w, big_j, &opts).unwrap().value
                        })
                        .collect();
                    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = ratios.iter().copied().fold(0.0, f64::max);
                    (lo, hi)
                })
                .collect();
            let tight = bands.iter().all(|(lo, hi)| hi / lo < 100.0);
            let overlap = bands[0].0 <= bands[1].1 && bands[1].0 <= bands[0].1;
            ok &= tight && overlap;
            notes.push(format!(
                "{}/({a},{p},{q}): [{:.3}, {:.3}] vs [{:.3}, {:.3}]",
                w.label(),
                bands[0].0,
                bands[0].1,
                bands[1].0,
                bands[1].1
            ));
        }
    }
    outcome(ok, notes.join("; "))
}

fn c9_lower_bound() -> Outcome {
    let big_j = 4;
    let grid = TileGrid::build(1, DELTA_STAR, big_j, false).unwrap();
    let cases = [
        (Weight::unit(), 1.0, Verdict::Pass),
        (Weight::power(0.5).unwrap(), 1.5, Verdict::Pass),
        (Weight::gaussian(1.0).unwrap(), 1.0, Verdict::Pass),
        (Weight::gaussian(-1.0).unwrap(), 1.0, Verdict::Fail),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (w, gamma, want) in cases {
        let t = embedding::lower_bound_tiles(&w, &grid, gamma, big_j).unwrap();
        let b = embedding::lower_bound_balls(&w, gamma, &BallPlan::matched(&grid, big_j)).unwrap();
        let witnessed = want != Verdict::Fail
            || (t.argmin.lo.iter().chain(&t.argmin.hi).all(|v| v.is_finite())
                && t.argmin.log_mass.is_finite()
                && b.argmin.center.iter().all(|v| v.is_finite()));
        ok &= t.verdict == want && b.verdict == want && witnessed;
        notes.push(format!(
            "{} γ={gamma}: tiles {:?} (min {:.3e} at j={} [{:.3}, {:.3}]), balls {:?} (min {:.3e} at x={:.3}, r={:.3e})",
            w.label(),
            t.verdict,
            t.min,
            t.argmin.j,
            t.argmin.lo[0],
            t.argmin.hi[0],
            b.verdict,
            b.min,
            b.argmin.center[0],
            b.argmin.radius
        ));
    }
    outcome(ok, notes.join("; "))
}

fn c10_embedding() -> Outcome {
    let start = Instant::now();
    let grid = TileGrid::build(1, DELTA_STAR, 4, false).unwrap();
    let b = |a, p, q| SpaceParams::new(a, p, q, Scale::Besov).unwrap();
    let params = EmbeddingParams::new(b(1.0, 1.0, 1.0), b(0.5, 2.0, 2.0), 1.0).unwrap();
    let unit = Weight::unit();
    let n3 = embedding::necessity_probe(&params, &unit, &grid, 3).unwrap();
    let n4 = embedding::necessity_probe(&params, &unit, &grid, 4).unwrap();
    let singleton = n4.max / n3.max;
    let s500 = embedding::sufficiency_probe(&params, &unit, &grid, 4, 500, 7).unwrap();
    let s1000 = embedding::sufficiency_probe(&params, &unit, &grid, 4, 1000, 7).unwrap();
    let doubling = s1000.constant / s500.constant;
    let gauss = Weight::gaussian(-1.0).unwrap();
    let g3 = embedding::necessity_probe(&params, &gauss, &grid, 3).unwrap();
    let g4 = embedding::necessity_probe(&params, &gauss, &grid, 4).unwrap();
    let growth_log10 = (g4.log_max - g3.log_max) / std::f64::consts::LN_10;
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.5..=2.0).contains(&singleton)
        && (0.5..=2.0).contains(&doubling)
        && growth_log10 >= 4f64.log10()
        && g4.verdict == Verdict::Fail
        && secs < 300.0;
    outcome(
        pass,
        format!(
            "w≡1: singleton max J3 {:.4} J4 {:.4}; C(500) {:.4} C(1000) {:.4}; e^(-|x|²): singleton growth 10^{growth_log10:.1}, verdict {:?}; {secs:.1}s",
            n3.max, n4.max, s500.constant, s1000.constant, g4.verdict
        ),
    )
}

fn c11_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hermite-frames");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let f = d.join("f.json");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let coeffs: Vec<Complex64> = (0..=12).map(|_| Complex64::new(normal(&mut rng), 0.0)).collect();
    std::fs::write(&f, HermiteExpansion::from_1d(coeffs).to_json_string().unwrap()).unwrap();
    let f = f.to_str().unwrap().to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["grid", "--n", "1", "--J", "3"],
        vec!["analyze", "--in", &f, "--J", "2"],
        vec!["norm", "--kind", "triebel", "--space", "a=0.5,p=1.5,q=2", "--in", &f, "--J", "2"],
        vec![
            "embed", "check", "--source", "a=1,p=1,q=1", "--target", "a=0.5,p=2,q=2", "--gamma", "1", "--J", "3",
            "--trials", "200", "--seed", "7",
        ],
        vec!["diagnose", "kernel-decay", "--j", "2", "--N", "6"],
    ];
    let mut identical = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (r, threads) in ["1", "4", "4"].iter().enumerate() {
            let out = d.join(format!("run{i}_{r}.json"));
            let status = Command::new(bin)
                .args(args)
                .args(["--threads", threads, "--out", out.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success(), "{args:?} failed");
            outputs.push(std::fs::read(&out).unwrap());
        }
        if outputs.windows(2).all(|w| w[0] == w[1]) {
            identical += 1;
        }
    }
    outcome(
        identical == runs.len(),
        format!("{identical}/{} commands byte-identical across 3 runs and thread counts", runs.len()),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "orthonormality", c1_orthonormality),
        (2, "zeros", c2_zeros),
        (3, "cubature exactness", c3_cubature),
        (4, "tile partition", c4_tiles),
        (5, "reconstruction", c5_reconstruction),
        (6, "almost orthogonality", c6_almost_orthogonality),
        (7, "kernel decay", c7_kernel_decay),
        (8, "frame norm equivalence", c8_norm_equivalence),
        (9, "lower-bound equivalence", c9_lower_bound),
        (10, "embedding necessity/sufficiency", c10_embedding),
        (11, "determinism", c11_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {name:<32} {verdict}  [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
        if !result.pass && !EXPECTED_FAILURES.contains(&id) {
            unexpected.push(id);
        }
        if result.pass && EXPECTED_FAILURES.contains(&id) {
            println!("criterion {id:>2} passed although it is listed as an expected failure");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
    if !EXPECTED_FAILURES.is_empty() {
        println!("expected failures (documented): {EXPECTED_FAILURES:?}");
    }
}
