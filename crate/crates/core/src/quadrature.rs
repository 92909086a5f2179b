//! Globally adaptive Gauss–Legendre quadrature on intervals and rectangles.
//!
//! Each panel is integrated with a 10-point and a 20-point rule; their
//! difference is the panel error estimate. The panel with the largest estimate
//! is bisected until the summed estimate meets the tolerance or the panel cap
//! is reached.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Panel cap shared by all adaptive integrators.
pub const MAX_PANELS: usize = 100_000;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(points: usize) -> Self {
        let gl = GaussLegendre::new(points.max(2)).expect("at least two points");
        let (nodes, weights) = gl.as_node_weight_pairs().iter().copied().unzip();
        Rule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫_a^b f` with this rule on a single panel.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(m + h * t))
            .sum::<f64>()
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (m + h * t, h * w))
    }
}

fn low() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::new(10))
}

fn high() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::new(20))
}

/// A cached rule with `points` nodes for the common sizes, built otherwise.
pub fn rule(points: usize) -> Rule {
    match points {
        10 => low().clone(),
        20 => high().clone(),
        _ => Rule::new(points),
    }
}

/// Tolerances for the adaptive integrators.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-8,
            abs: 0.0,
            max_panels: MAX_PANELS,
        }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Default::default()
        }
    }
}

struct Panel<T> {
    err: f64,
    value: f64,
    region: T,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn run_adaptive<T: Copy>(
    initial: Vec<T>,
    estimate: impl Fn(T) -> (f64, f64),
    split: impl Fn(T) -> Vec<T>,
    tol: Tolerance,
    what: &str,
    bounds: (f64, f64),
) -> Result<f64> {
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for r in initial {
        let (v, e) = estimate(r);
        total += v;
        err += e;
        heap.push(Panel { err: e, value: v, region: r });
    }
    let mut panels = heap.len();
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Convergence {
                what: format!("{what}: non-finite integrand"),
                lo: bounds.0,
                hi: bounds.1,
            });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            // Re-sum to drop accumulated update roundoff.
            return Ok(heap.iter().map(|p| p.value).sum());
        }
        if panels >= tol.max_panels {
            return Err(Error::Convergence {
                what: format!("{what}: panel cap {} reached (error {err:e})", tol.max_panels),
                lo: bounds.0,
                hi: bounds.1,
            });
        }
        let worst = heap.pop().expect("nonempty");
        total -= worst.value;
        err -= worst.err;
        for r in split(worst.region) {
            let (v, e) = estimate(r);
            total += v;
            err += e;
            heap.push(Panel { err: e, value: v, region: r });
            panels += 1;
        }
        panels -= 1;
        err = err.max(0.0);
    }
}

/// Adaptive `∫_a^b f`. `breaks` are interior points where `f` may be
/// non-smooth; they seed the initial panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, breaks, tol).map(|v| -v);
    }
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    let initial: Vec<(f64, f64)> = pts.windows(2).map(|w| (w[0], w[1])).collect();
    let (lo, hi) = (low(), high());
    run_adaptive(
        initial,
        |(a, b)| {
            let g = hi.integrate(a, b, &f);
            let l = lo.integrate(a, b, &f);
            (g, (g - l).abs())
        },
        |(a, b)| {
            let m = 0.5 * (a + b);
            vec![(a, m), (m, b)]
        },
        tol,
        "adaptive quadrature",
        (a, b),
    )
}

/// Adaptive integral over the rectangle `[a0,b0] × [a1,b1]`.
pub fn integrate_2d(
    f: impl Fn(f64, f64) -> f64,
    lo: [f64; 2],
    hi: [f64; 2],
    tol: Tolerance,
) -> Result<f64> {
    if lo[0] >= hi[0] || lo[1] >= hi[1] {
        return Ok(0.0);
    }
    let (rl, rh) = (low(), high());
    let tensor = |r: &Rule, (a, b): ([f64; 2], [f64; 2])| -> f64 {
        let ys: Vec<(f64, f64)> = r.mapped(a[1], b[1]).collect();
        r.mapped(a[0], b[0])
            .map(|(x, wx)| wx * ys.iter().map(|&(y, wy)| wy * f(x, y)).sum::<f64>())
            .sum()
    };
    run_adaptive(
        vec![(lo, hi)],
        |r| {
            let g = tensor(rh, r);
            let l = tensor(rl, r);
            (g, (g - l).abs())
        },
        |(a, b)| {
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            vec![
                ([a[0], a[1]], [m[0], m[1]]),
                ([m[0], a[1]], [b[0], m[1]]),
                ([a[0], m[1]], [m[0], b[1]]),
                ([m[0], m[1]], [b[0], b[1]]),
            ]
        },
        tol,
        "adaptive 2-D quadrature",
        (lo[0].min(lo[1]), hi[0].max(hi[1])),
    )
}
