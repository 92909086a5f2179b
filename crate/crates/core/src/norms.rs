//! Weighted Besov and Triebel–Lizorkin norms of Hermite expansions and of
//! frame coefficient sequences.
//!
//! Function norms integrate `|φ_j(√L)f|` with composite Gauss–Legendre rules
//! over a cube `Q(0, R)`. Outside the cube a band-limited function obeys
//! `|h_k(t)| ≤ |h_k(R)| e^{−β(t²−R²)/2}` with `β = (1 − (2D+1)/R²)^{1/2}`, and
//! the tail integral is bounded shell by shell with exact weight masses. The
//! radius grows until the bound is negligible.
//!
//! Sequence norms are exact finite sums; the Triebel–Lizorkin case integrates
//! over the arrangement of tile boundaries.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::HermiteExpansion;
use crate::frames::{tensor_values, FrameSequence, NodeTable};
use crate::hermite::hermite_values;
use crate::multipliers::MultiplierSystem;
use crate::quadrature::rule;
use crate::tiles::TileGrid;
use crate::weights::{Family, Weight};

/// Smallest accepted `p` and `q`.
pub const EXPONENT_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Besov,
    Triebel,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "besov" | "b" => Ok(Scale::Besov),
            "triebel" | "f" => Ok(Scale::Triebel),
            _ => Err(Error::invalid(format!("unknown scale '{s}' (besov or triebel)"))),
        }
    }
}

/// `(α, p, q)` and the scale family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub scale: Scale,
}

fn parse_exponent(v: &str) -> Result<f64> {
    match v.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("cannot parse '{t}' as a number"))),
    }
}

impl SpaceParams {
    pub fn new(alpha: f64, p: f64, q: f64, scale: Scale) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("α must be finite"));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if v.is_nan() || v < EXPONENT_FLOOR {
                return Err(Error::invalid(format!("{name} = {v} is below the floor {EXPONENT_FLOOR}")));
            }
        }
        if scale == Scale::Triebel && p.is_infinite() {
            return Err(Error::invalid("Triebel–Lizorkin norms need p < ∞"));
        }
        Ok(SpaceParams { alpha, p, q, scale })
    }

    /// Parses `"a=0.5,p=2,q=2"`; `inf` is accepted for `p` and `q`.
    pub fn parse(s: &str, scale: Scale) -> Result<Self> {
        let (mut a, mut p, mut q) = (None, None, None);
        for part in s.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got '{part}'")))?;
            let slot = match k.trim() {
                "a" | "alpha" => &mut a,
                "p" => &mut p,
                "q" => &mut q,
                other => return Err(Error::invalid(format!("unknown space parameter '{other}'"))),
            };
            if slot.replace(parse_exponent(v)?).is_some() {
                return Err(Error::invalid(format!("parameter '{}' given twice", k.trim())));
            }
        }
        match (a, p, q) {
            (Some(a), Some(p), Some(q)) => Self::new(a, p, q, scale),
            _ => Err(Error::invalid(format!("'{s}' must set a, p and q"))),
        }
    }

    pub fn with_scale(self, scale: Scale) -> Result<Self> {
        Self::new(self.alpha, self.p, self.q, scale)
    }
}

impl fmt::Display for SpaceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={},p={},q={}", self.alpha, self.p, self.q)
    }
}

/// Quadrature controls for function norms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormOptions {
    /// Panels per oscillation half-period.
    pub resolution: f64,
    /// Accepted tail bound relative to the interior integral.
    pub tail_rel: f64,
    pub max_points: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            resolution: 1.0,
            tail_rel: 1e-13,
            max_points: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelNorm {
    pub j: usize,
    pub value: f64,
}

/// A norm value with its per-level breakdown. For function norms the level
/// entries are `2^{jα}‖φ_j(√L)f‖_{L^p_w}`; for sequences they are the inner
/// level norms times `2^{jα}`.
#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub params: SpaceParams,
    pub value: f64,
    pub levels: Vec<LevelNorm>,
    /// Bound on the p-th power of the neglected tail relative to the
    /// computed integral; zero for sequences.
    pub tail_bound: f64,
    pub radius: f64,
    pub points: usize,
}

/// `m + ln Σ exp(s(x_i − m))/s`; returns the maximum when `s = ∞`. A single
/// term comes back unchanged.
fn lse_scaled(xs: impl IntoIterator<Item = f64>, s: f64) -> f64 {
    let xs: Vec<f64> = xs.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() || s.is_infinite() || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (s * (x - m)).exp()).sum::<f64>().ln() / s
}

/// Axis nodes and log-weights of the composite rule on `[−R, R]`.
fn axis_rule(radius: f64, spacing: f64, breaks: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|t| t.abs() < radius).collect();
    pts.push(-radius);
    pts.push(radius);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let r = rule(20);
    let (mut xs, mut ws) = (Vec::new(), Vec::new());
    for w in pts.windows(2) {
        let pieces = ((w[1] - w[0]) / spacing).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for i in 0..pieces {
            let a = w[0] + i as f64 * h;
            let b = if i + 1 == pieces { w[1] } else { a + h };
            for (x, wt) in r.mapped(a, b) {
                xs.push(x);
                ws.push(wt.ln());
            }
        }
    }
    (xs, ws)
}

fn weight_breaks(w: &Weight) -> Vec<f64> {
    match w.family() {
        Family::Power { epsilon } if *epsilon != 0.0 => {
            let mut b = vec![0.0];
            for k in 1..=40 {
                let t = 2f64.powi(-k);
                b.extend([t, -t]);
            }
            b
        }
        Family::Table { x, .. } => x.clone(),
        _ => Vec::new(),
    }
}

/// Sign changes of `Re` and `Im` of each component on `[−R, R]`, refined by
/// bisection. One-dimensional only.
fn component_zeros(f: &HermiteExpansion, comps: &[Vec<f64>], radius: f64, step: f64) -> Vec<f64> {
    comps
        .par_iter()
        .flat_map_iter(|m| {
            let eval = |x: f64| f.evaluate_with(&[x], |k| m.get(k).copied().unwrap_or(0.0));
            let count = (2.0 * radius / step).ceil() as usize;
            let xs: Vec<f64> = (0..=count).map(|i| -radius + 2.0 * radius * i as f64 / count as f64).collect();
            let vals: Vec<Complex64> = xs.iter().map(|&x| eval(x)).collect();
            let mut out = Vec::new();
            for part in [0usize, 1] {
                let pick = |c: Complex64| if part == 0 { c.re } else { c.im };
                for i in 0..count {
                    let (mut a, mut b) = (xs[i], xs[i + 1]);
                    let (fa, fb) = (pick(vals[i]), pick(vals[i + 1]));
                    if fa == 0.0 || fa.signum() == fb.signum() {
                        continue;
                    }
                    for _ in 0..60 {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        if pick(eval(mid)).signum() == fa.signum() {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    out.push(0.5 * (a + b));
                }
            }
            out
        })
        .collect()
}

/// Values of several spectral components of `f` on a tensor Gauss grid.
struct Field {
    values: Vec<Vec<Complex64>>,
    dim: usize,
    axis: Vec<f64>,
    spacing: f64,
    /// `ln w(x) + ln(quadrature weight)` per point.
    log_w: Vec<f64>,
    radius: f64,
}

fn even_integer(p: f64) -> bool {
    p.is_finite() && p % 2.0 == 0.0
}

/// `ln` of an upper bound for `Σ_shells sup_shell e^{−pβ(t²−R²)/2}·w(shell)`
/// over `|x|_∞ ≥ R`.
fn log_tail_profile(w: &Weight, n: usize, radius: f64, beta: f64, p: f64) -> Result<f64> {
    const STEP: f64 = 0.5;
    let mut terms: Vec<f64> = Vec::new();
    let mut prev = f64::INFINITY;
    for k in 0..4000 {
        let r1 = radius + k as f64 * STEP;
        let r2 = r1 + STEP;
        let decay = -p * beta * (r1 * r1 - radius * radius) / 2.0;
        // Shell mass bounded by the 2n slabs covering it.
        let mut slabs = Vec::with_capacity(2 * n);
        for axis in 0..n {
            for sign in [-1.0, 1.0] {
                let mut lo = vec![-r2; n];
                let mut hi = vec![r2; n];
                if sign > 0.0 {
                    lo[axis] = r1;
                } else {
                    hi[axis] = -r1;
                }
                slabs.push(w.log_mass_box(&lo, &hi)?);
            }
        }
        let t = decay + lse_scaled(slabs, 1.0);
        terms.push(t);
        let total = lse_scaled(terms.iter().copied(), 1.0);
        if k >= 4 && t < prev - STEP && t < total - 50.0 {
            return Ok(total);
        }
        prev = t;
    }
    Err(Error::NonIntegrable(format!(
        "the tail of |f|^{p}·w does not decay beyond radius {radius}"
    )))
}

/// Quadrature of spectral components `m_c(|ξ|)` of `f`, with certified tails.
struct Engine<'a> {
    f: &'a HermiteExpansion,
    comps: Vec<Vec<f64>>,
    w: &'a Weight,
    opts: NormOptions,
    degree: usize,
}

impl<'a> Engine<'a> {
    fn new(f: &'a HermiteExpansion, comps: Vec<Vec<f64>>, w: &'a Weight, opts: NormOptions) -> Result<Self> {
        w.check_dim(f.dim())?;
        if !(opts.resolution > 0.0 && opts.resolution.is_finite()) {
            return Err(Error::invalid("quadrature resolution must be positive"));
        }
        let degree = f.effective_degree().unwrap_or(0);
        Ok(Engine {
            f,
            comps,
            w,
            opts,
            degree,
        })
    }

    fn field(&self, radius: f64, kinks: bool) -> Result<Field> {
        let n = self.f.dim();
        let d = self.degree;
        let osc = std::f64::consts::PI / (2.0 * d as f64 + 1.0).sqrt();
        let spacing = osc.min(1.0) / self.opts.resolution;
        let mut breaks = weight_breaks(self.w);
        if kinks && n == 1 {
            breaks.extend(component_zeros(self.f, &self.comps, radius, spacing / 8.0));
        }
        let (xs, lws) = axis_rule(radius, spacing, &breaks);
        let per_axis = xs.len();
        let total = (per_axis as u128).pow(n as u32);
        if total > self.opts.max_points as u128 {
            return Err(Error::Resource {
                what: "norm quadrature points",
                needed: total,
                cap: self.opts.max_points as u128,
            });
        }
        let rows: Vec<Vec<f64>> = xs.par_iter().map(|&x| hermite_values(d, x)).collect();
        let table = NodeTable::from_rows(rows, d);
        let values = self
            .comps
            .iter()
            .map(|m| tensor_values(&table, self.f, n, |k| m.get(k).copied().unwrap_or(0.0)))
            .collect();
        let total = total as usize;
        let log_w = (0..total)
            .into_par_iter()
            .map(|mut i| {
                let mut x = vec![0.0; n];
                let mut lw = 0.0;
                for a in (0..n).rev() {
                    let p = i % per_axis;
                    i /= per_axis;
                    x[a] = xs[p];
                    lw += lws[p];
                }
                lw + self.w.log_value(&x)
            })
            .collect();
        Ok(Field {
            values,
            log_w,
            dim: n,
            axis: xs,
            spacing,
            radius,
        })
    }

    /// `(R, β, ln(π^{−(n−1)/4} max_k |h_k(R)|))` for the tail bound.
    fn tail_setup(&self, radius: f64) -> (f64, f64) {
        let d = self.degree;
        let beta = (1.0 - (2.0 * d as f64 + 1.0) / (radius * radius)).sqrt();
        let mr = hermite_values(d, radius).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pref = -((self.f.dim() - 1) as f64) * std::f64::consts::PI.ln() / 4.0;
        (beta, pref + mr.ln())
    }

    /// `ln Σ_ξ |c_ξ m(|ξ|)|` per component.
    fn log_abs_sums(&self) -> Vec<f64> {
        self.comps
            .iter()
            .map(|m| {
                self.f
                    .iter()
                    .map(|(xi, c)| c.norm() * m.get(xi.iter().sum::<usize>()).copied().unwrap_or(0.0).abs())
                    .sum::<f64>()
                    .ln()
            })
            .collect()
    }

    /// Runs `integrate` on growing cubes until the tail bound it reports is
    /// negligible. `integrate` returns `(ln interior, ln tail bound)`.
    fn converge<T>(
        &self,
        kinks: bool,
        integrate: impl Fn(&Field, f64, f64) -> Result<(T, f64, f64)>,
    ) -> Result<(T, f64, f64, usize)> {
        let mut radius = (2.0 * self.degree as f64 + 1.0).sqrt() + 3.0;
        for _ in 0..12 {
            let field = self.field(radius, kinks)?;
            let (beta, log_edge) = self.tail_setup(radius);
            let (out, interior, tail) = integrate(&field, beta, log_edge)?;
            let points = field.log_w.len();
            if tail == f64::NEG_INFINITY {
                return Ok((out, 0.0, field.radius, points));
            }
            if tail <= interior + self.opts.tail_rel.ln() {
                return Ok((out, (tail - interior).exp(), field.radius, points));
            }
            radius += 2.0;
        }
        Err(Error::Convergence {
            what: "norm tail bound stays above tolerance".into(),
            lo: 0.0,
            hi: radius,
        })
    }
}

fn check_band(f: &HermiteExpansion, big_j: usize) -> Result<()> {
    let cap = 4usize.pow(big_j as u32);
    match f.effective_degree() {
        Some(d) if d > cap => Err(Error::invalid(format!(
            "expansion has degree {d} beyond V_{cap} (J = {big_j})"
        ))),
        _ => Ok(()),
    }
}

fn level_multipliers(sys: &MultiplierSystem, big_j: usize, n: usize, degree: usize) -> Vec<Vec<f64>> {
    (0..=big_j + 2)
        .map(|j| (0..=degree).map(|k| sys.at_degree(j, k, n)).collect())
        .collect()
}

impl Field {
    fn point(&self, mut i: usize, n: usize) -> Vec<f64> {
        let m = self.axis.len();
        let mut x = vec![0.0; n];
        for a in (0..n).rev() {
            x[a] = self.axis[i % m];
            i /= m;
        }
        x
    }
}

/// Golden-section search for the maximum of `g` on `[a, b]`.
fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    if gc > gd {
        (c, gc)
    } else {
        (d, gd)
    }
}

/// `ln sup |v|`: the best quadrature node, refined by coordinate sweeps.
fn log_sup(field: &Field, vals: &[Complex64], eval: impl Fn(&[f64]) -> f64) -> f64 {
    let Some((i, _)) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
    else {
        return f64::NEG_INFINITY;
    };
    let n = field.dim;
    let mut x = field.point(i, n);
    let mut best = eval(&x);
    for _ in 0..4 {
        for a in 0..n {
            let (lo, hi) = (x[a] - field.spacing, x[a] + field.spacing);
            let (t, v) = golden_max(
                |t| {
                    let mut y = x.clone();
                    y[a] = t;
                    eval(&y)
                },
                lo,
                hi,
            );
            if v > best {
                best = v;
                x[a] = t;
            }
        }
    }
    best.max(vals[i].norm()).ln()
}

/// `ln ‖v‖_{L^p_w}^p` on the field; `p` finite.
fn log_lp_power(field: &Field, vals: &[Complex64], p: f64) -> f64 {
    let terms: Vec<f64> = vals
        .par_iter()
        .zip(&field.log_w)
        .map(|(v, lw)| p * v.norm().ln() + lw)
        .collect();
    lse_scaled(terms, 1.0)
}

/// `‖g‖_{L^p_w}` for an expansion `g`.
pub fn weighted_lp_norm(g: &HermiteExpansion, p: f64, w: &Weight, opts: &NormOptions) -> Result<f64> {
    if !(p >= EXPONENT_FLOOR) {
        return Err(Error::invalid(format!("p = {p} is below the floor {EXPONENT_FLOOR}")));
    }
    if p.is_infinite() && !w.locally_bounded() {
        return Err(Error::Unsupported("L^∞ norms need a locally bounded weight".into()));
    }
    if g.effective_degree().is_none() {
        return Ok(0.0);
    }
    let ones = vec![vec![1.0; g.degree() + 1]];
    let eng = Engine::new(g, ones, w, *opts)?;
    let log_sum = eng.log_abs_sums()[0];
    let n = g.dim();
    let (v, _, _, _) = eng.converge(!even_integer(p), |field, beta, edge| {
        let interior = if p.is_infinite() {
            log_sup(field, &field.values[0], |x| g.evaluate(x).norm())
        } else {
            log_lp_power(field, &field.values[0], p)
        };
        let tail = if p.is_infinite() {
            log_sum + edge
        } else {
            p * (log_sum + edge) + log_tail_profile(w, n, field.radius, beta, p)?
        };
        Ok((interior, interior, tail))
    })?;
    Ok(if p.is_infinite() { v.exp() } else { (v / p).exp() })
}

/// `(Σ_{j ≤ J+2} (2^{jα}‖φ_j(√L)f‖_{L^p_w})^q)^{1/q}`.
pub fn besov_norm(
    f: &HermiteExpansion,
    sys: &MultiplierSystem,
    params: &SpaceParams,
    w: &Weight,
    big_j: usize,
    opts: &NormOptions,
) -> Result<NormReport> {
    check_band(f, big_j)?;
    let p = params.p;
    if p.is_infinite() && !w.locally_bounded() {
        return Err(Error::Unsupported("p = ∞ needs a locally bounded weight".into()));
    }
    let n = f.dim();
    let comps = level_multipliers(sys, big_j, n, f.degree());
    let eng = Engine::new(f, comps, w, *opts)?;
    let sums = eng.log_abs_sums();
    let shift = |j: usize| j as f64 * params.alpha * std::f64::consts::LN_2;
    let (levels, tail, radius, points) = eng.converge(!even_integer(p), |field, beta, edge| {
        let prof = if p.is_infinite() {
            0.0
        } else {
            log_tail_profile(w, n, field.radius, beta, p)?
        };
        let mut worst = f64::NEG_INFINITY;
        let mut logs = Vec::new();
        let mut interior = Vec::new();
        for (j, vals) in field.values.iter().enumerate() {
            let inner = if p.is_infinite() {
                let m = &eng.comps[j];
                log_sup(field, vals, |x| {
                    f.evaluate_with(x, |k| m.get(k).copied().unwrap_or(0.0)).norm()
                })
            } else {
                log_lp_power(field, vals, p)
            };
            let tail_j = if p.is_infinite() { sums[j] + edge } else { p * (sums[j] + edge) + prof };
            interior.push(inner);
            if tail_j > f64::NEG_INFINITY {
                worst = worst.max(tail_j - inner);
            }
            let norm = if p.is_infinite() { inner } else { inner / p };
            logs.push(norm);
        }
        // Tails are compared level by level, so the interior slot is zero.
        Ok((logs, 0.0, worst))
    })?;
    let level_logs: Vec<f64> = levels.iter().enumerate().map(|(j, l)| l + shift(j)).collect();
    let value = lse_scaled(level_logs.iter().copied(), params.q).exp();
    Ok(NormReport {
        params: *params,
        value: if value.is_nan() { 0.0 } else { value },
        levels: level_logs
            .iter()
            .enumerate()
            .map(|(j, l)| LevelNorm { j, value: l.exp() })
            .collect(),
        tail_bound: tail,
        radius,
        points,
    })
}

/// `‖(Σ_{j ≤ J+2} (2^{jα}|φ_j(√L)f|)^q)^{1/q}‖_{L^p_w}`.
pub fn triebel_norm(
    f: &HermiteExpansion,
    sys: &MultiplierSystem,
    params: &SpaceParams,
    w: &Weight,
    big_j: usize,
    opts: &NormOptions,
) -> Result<NormReport> {
    check_band(f, big_j)?;
    let (p, q) = (params.p, params.q);
    if p.is_infinite() {
        return Err(Error::invalid("Triebel–Lizorkin norms need p < ∞"));
    }
    let n = f.dim();
    let comps = level_multipliers(sys, big_j, n, f.degree());
    let eng = Engine::new(f, comps, w, *opts)?;
    let sums = eng.log_abs_sums();
    let shift = |j: usize| j as f64 * params.alpha * std::f64::consts::LN_2;
    let kinks = !(even_integer(p) && even_integer(q));
    let (out, tail, radius, points) = eng.converge(kinks, |field, beta, edge| {
        let count = field.log_w.len();
        let terms: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|i| {
                let g = lse_scaled(
                    field.values.iter().enumerate().map(|(j, v)| v[i].norm().ln() + shift(j)),
                    q,
                );
                p * g + field.log_w[i]
            })
            .collect();
        let interior = lse_scaled(terms, 1.0);
        let levels: Vec<f64> = field
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| log_lp_power(field, v, p) / p + shift(j))
            .collect();
        let edge_sum = lse_scaled(sums.iter().enumerate().map(|(j, s)| s + shift(j)), q) + edge;
        let tail = if edge_sum == f64::NEG_INFINITY {
            edge_sum
        } else {
            p * edge_sum + log_tail_profile(w, n, field.radius, beta, p)?
        };
        Ok(((interior, levels), interior, tail))
    })?;
    let (interior, levels) = out;
    Ok(NormReport {
        params: *params,
        value: (interior / p).exp(),
        levels: levels.iter().enumerate().map(|(j, l)| LevelNorm { j, value: l.exp() }).collect(),
        tail_bound: tail,
        radius,
        points,
    })
}

/// Dispatches on `params.scale`.
pub fn function_norm(
    f: &HermiteExpansion,
    sys: &MultiplierSystem,
    params: &SpaceParams,
    w: &Weight,
    big_j: usize,
    opts: &NormOptions,
) -> Result<NormReport> {
    match params.scale {
        Scale::Besov => besov_norm(f, sys, params, w, big_j, opts),
        Scale::Triebel => triebel_norm(f, sys, params, w, big_j, opts),
    }
}

/// `ln(|R|^{−1/2}|s_R|)` and `ln w(R)` for every nonzero entry of one level.
fn level_entries(s: &FrameSequence, grid: &TileGrid, w: &Weight, j: usize) -> Result<Vec<(f64, f64)>> {
    s.level(j)
        .par_iter()
        .enumerate()
        .filter(|(_, v)| v.norm_sqr() > 0.0)
        .map(|(i, v)| {
            let t = grid.tile_at(j, i);
            Ok((v.norm().ln() - 0.5 * t.measure.ln(), w.log_mass_box(&t.lo, &t.hi)?))
        })
        .collect()
}

fn check_sequence(s: &FrameSequence, grid: &TileGrid, w: &Weight) -> Result<()> {
    if s.dim() != grid.dim() {
        return Err(Error::invalid("sequence and grid dimensions differ"));
    }
    if s.max_level() > grid.max_level() {
        return Err(Error::invalid("sequence has levels beyond the grid"));
    }
    w.check_dim(grid.dim())
}

/// `{Σ_j 2^{jαq}(Σ_R (w(R)^{1/p}|R|^{−1/2}|s_R|)^p)^{q/p}}^{1/q}`.
pub fn seq_besov_norm(s: &FrameSequence, params: &SpaceParams, w: &Weight, grid: &TileGrid) -> Result<NormReport> {
    check_sequence(s, grid, w)?;
    let p = params.p;
    let mut level_logs = Vec::new();
    for j in 0..=s.max_level() {
        let entries = level_entries(s, grid, w, j)?;
        let inner = lse_scaled(
            entries
                .iter()
                .map(|(a, lm)| if p.is_infinite() { *a } else { a + lm / p }),
            p,
        );
        level_logs.push(inner + j as f64 * params.alpha * std::f64::consts::LN_2);
    }
    Ok(NormReport {
        params: *params,
        value: lse_scaled(level_logs.iter().copied(), params.q).exp(),
        levels: level_logs
            .iter()
            .enumerate()
            .map(|(j, l)| LevelNorm { j, value: l.exp() })
            .collect(),
        tail_bound: 0.0,
        radius: 0.0,
        points: 0,
    })
}

/// Cap on arrangement cells for the Triebel–Lizorkin sequence norm.
pub const ARRANGEMENT_CAP: u128 = 20_000_000;

/// `‖(Σ_j 2^{jαq} Σ_R (1_R|R|^{−1/2}|s_R|)^q)^{1/q}‖_{L^p_w}`, integrated
/// exactly over the arrangement of the supporting tiles.
pub fn seq_triebel_norm(s: &FrameSequence, params: &SpaceParams, w: &Weight, grid: &TileGrid) -> Result<NormReport> {
    check_sequence(s, grid, w)?;
    let (p, q) = (params.p, params.q);
    if p.is_infinite() {
        return Err(Error::invalid("Triebel–Lizorkin norms need p < ∞"));
    }
    let n = grid.dim();
    let active: Vec<usize> = (0..=s.max_level())
        .filter(|&j| s.level(j).iter().any(|v| v.norm_sqr() > 0.0))
        .collect();
    // Per-axis breakpoints from the supporting tiles.
    let mut breaks = vec![Vec::new(); n];
    for &j in &active {
        let lev = grid.level(j);
        for (i, v) in s.level(j).iter().enumerate() {
            if v.norm_sqr() == 0.0 {
                continue;
            }
            for (a, &pos) in grid.unflatten(j, i).iter().enumerate() {
                let (lo, hi) = lev.intervals[pos];
                breaks[a].extend([lo, hi]);
            }
        }
    }
    for b in &mut breaks {
        b.sort_by(f64::total_cmp);
        b.dedup();
    }
    let cells_per_axis: Vec<usize> = breaks.iter().map(|b| b.len().saturating_sub(1)).collect();
    let total: u128 = cells_per_axis.iter().map(|&c| c as u128).product();
    if total > ARRANGEMENT_CAP {
        return Err(Error::Resource {
            what: "tile arrangement",
            needed: total,
            cap: ARRANGEMENT_CAP,
        });
    }
    // Axis position of every arrangement interval at every active level.
    let located: Vec<Vec<Vec<Option<usize>>>> = active
        .iter()
        .map(|&j| {
            let lev = grid.level(j);
            breaks
                .iter()
                .map(|b| b.windows(2).map(|w| lev.locate_1d(0.5 * (w[0] + w[1]))).collect())
                .collect()
        })
        .collect();
    let shift = |j: usize| j as f64 * params.alpha * std::f64::consts::LN_2;
    let cells: Vec<Result<f64>> = (0..total as usize)
        .into_par_iter()
        .map(|mut c| {
            let mut idx = vec![0; n];
            for a in (0..n).rev() {
                idx[a] = c % cells_per_axis[a];
                c /= cells_per_axis[a];
            }
            let mut amps = Vec::new();
            for (li, &j) in active.iter().enumerate() {
                let pos: Option<Vec<usize>> = (0..n).map(|a| located[li][a][idx[a]]).collect();
                let Some(pos) = pos else { continue };
                let flat = grid.flatten(j, &pos);
                let v = s.level(j)[flat];
                if v.norm_sqr() > 0.0 {
                    let m = grid.tile_at(j, flat).measure;
                    amps.push((j, v.norm().ln() - 0.5 * m.ln()));
                }
            }
            if amps.is_empty() {
                return Ok(f64::NEG_INFINITY);
            }
            let lo: Vec<f64> = (0..n).map(|a| breaks[a][idx[a]]).collect();
            let hi: Vec<f64> = (0..n).map(|a| breaks[a][idx[a] + 1]).collect();
            let lm = w.log_mass_box(&lo, &hi)?;
            Ok(lse_scaled(amps.iter().map(|&(j, a)| a + lm / p + shift(j)), q))
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let value = lse_scaled(cells, p).exp();
    let mut levels = Vec::new();
    for j in 0..=s.max_level() {
        let entries = level_entries(s, grid, w, j)?;
        let inner = lse_scaled(entries.iter().map(|(a, lm)| a + lm / p), p);
        levels.push(LevelNorm {
            j,
            value: (inner + shift(j)).exp(),
        });
    }
    Ok(NormReport {
        params: *params,
        value,
        levels,
        tail_bound: 0.0,
        radius: 0.0,
        points: 0,
    })
}

/// Dispatches on `params.scale`.
pub fn sequence_norm(s: &FrameSequence, params: &SpaceParams, w: &Weight, grid: &TileGrid) -> Result<NormReport> {
    match params.scale {
        Scale::Besov => seq_besov_norm(s, params, w, grid),
        Scale::Triebel => seq_triebel_norm(s, params, w, grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::{TileId, DEFAULT_DELTA_STAR};

    fn b(a: f64, p: f64, q: f64) -> SpaceParams {
        SpaceParams::new(a, p, q, Scale::Besov).unwrap()
    }

    fn f(a: f64, p: f64, q: f64) -> SpaceParams {
        SpaceParams::new(a, p, q, Scale::Triebel).unwrap()
    }

    fn sample(seed: u64, deg: usize) -> HermiteExpansion {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        HermiteExpansion::from_real_1d(&(0..=deg).map(|_| next()).collect::<Vec<_>>())
    }

    #[test]
    fn parse_params() {
        let s = SpaceParams::parse("a=0.5,p=2,q=inf", Scale::Besov).unwrap();
        assert_eq!((s.alpha, s.p), (0.5, 2.0));
        assert!(s.q.is_infinite());
        assert!(SpaceParams::parse("a=0.5,p=inf,q=1", Scale::Triebel).is_err());
        assert!(SpaceParams::parse("a=0.5,p=2", Scale::Besov).is_err());
        assert!(SpaceParams::parse("a=0.5,p=0.01,q=1", Scale::Besov).is_err());
        assert!(SpaceParams::parse("a=1,p=2,q=2,z=1", Scale::Besov).is_err());
    }

    #[test]
    fn lp_norm_of_h0() {
        let h0 = HermiteExpansion::basis(&[0]);
        let opts = NormOptions::default();
        let v = weighted_lp_norm(&h0, 2.0, &Weight::unit(), &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        // ∫ π^{-1/2} e^{-x²} e^{-x²} = 2^{-1/2}.
        let g = Weight::gaussian(-1.0).unwrap();
        let v = weighted_lp_norm(&h0, 2.0, &g, &opts).unwrap();
        assert!((v * v - 0.5f64.sqrt()).abs() < 1e-13);
        // ‖h_0‖_1 = π^{-1/4} √(2π).
        let v = weighted_lp_norm(&h0, 1.0, &Weight::unit(), &opts).unwrap();
        let want = std::f64::consts::PI.powf(-0.25) * (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - want).abs() < 1e-12);
        let sup = weighted_lp_norm(&h0, f64::INFINITY, &Weight::unit(), &opts).unwrap();
        assert!((sup - std::f64::consts::PI.powf(-0.25)).abs() < 1e-12);
    }

    #[test]
    fn besov_examples() {
        let sys = MultiplierSystem::partition(0.05).unwrap();
        let opts = NormOptions::default();
        let one = Weight::unit();
        let zero = HermiteExpansion::zero(1, 3);
        assert_eq!(besov_norm(&zero, &sys, &b(0.5, 2.0, 2.0), &one, 2, &opts).unwrap().value, 0.0);
        let h0 = HermiteExpansion::basis(&[0]);
        let r = besov_norm(&h0, &sys, &b(0.0, 2.0, 2.0), &one, 2, &opts).unwrap();
        let scalar: f64 = (0..=4).map(|j| sys.value(j, 1.0).powi(2)).sum::<f64>().sqrt();
        assert!((r.value - scalar).abs() < 1e-10);
        let g = sample(4, 16);
        let two = g.scale(Complex64::new(2.0, 0.0));
        for prm in [b(0.0, 1.0, 1.0), b(1.0, 2.0, 3.0)] {
            let a = besov_norm(&g, &sys, &prm, &one, 2, &opts).unwrap().value;
            let c = besov_norm(&two, &sys, &prm, &one, 2, &opts).unwrap().value;
            assert!((c - 2.0 * a).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn triebel_matches_besov_at_p_eq_q() {
        let sys = MultiplierSystem::partition(0.05).unwrap();
        let opts = NormOptions::default();
        let g = sample(9, 16);
        for (p, w) in [(2.0, Weight::unit()), (1.0, Weight::gaussian(-1.0).unwrap()), (3.0, Weight::power(0.5).unwrap())] {
            let x = besov_norm(&g, &sys, &b(0.7, p, p), &w, 2, &opts).unwrap().value;
            let y = triebel_norm(&g, &sys, &f(0.7, p, p), &w, 2, &opts).unwrap().value;
            assert!((x - y).abs() < 1e-10 * x, "{x} {y}");
        }
    }

    #[test]
    fn single_scale_alpha_scaling() {
        let sys = MultiplierSystem::partition(0.05).unwrap();
        let opts = NormOptions::default();
        let k = (0..=16)
            .find(|&k| (0..=4).filter(|&j| sys.at_degree(j, k, 1) != 0.0).count() == 1)
            .unwrap();
        let j0 = (0..=4).find(|&j| sys.at_degree(j, k, 1) != 0.0).unwrap();
        let h = HermiteExpansion::basis(&[k]);
        let a = triebel_norm(&h, &sys, &f(0.0, 1.5, 2.0), &Weight::unit(), 2, &opts).unwrap().value;
        let c = triebel_norm(&h, &sys, &f(0.75, 1.5, 2.0), &Weight::unit(), 2, &opts).unwrap().value;
        assert!((c / a - 2f64.powf(0.75 * j0 as f64)).abs() < 1e-10);
    }

    #[test]
    fn resolution_doubling() {
        let sys = MultiplierSystem::partition(0.05).unwrap();
        let g = sample(2, 64);
        let coarse = NormOptions::default();
        let fine = NormOptions {
            resolution: 2.0,
            ..coarse
        };
        for prm in [b(0.5, 1.0, 1.0), f(0.0, 3.0, 2.0)] {
            let w = Weight::gaussian(-1.0).unwrap();
            let x = function_norm(&g, &sys, &prm, &w, 3, &coarse).unwrap().value;
            let y = function_norm(&g, &sys, &prm, &w, 3, &fine).unwrap().value;
            assert!((x - y).abs() < 1e-6 * x);
        }
    }

    #[test]
    fn growing_weight_tail() {
        // |h_0|² e^{x²/2} is integrable; |h_0| e^{x²} is not.
        let h0 = HermiteExpansion::basis(&[0]);
        let opts = NormOptions::default();
        let v = weighted_lp_norm(&h0, 2.0, &Weight::gaussian(0.5).unwrap(), &opts).unwrap();
        let want = (std::f64::consts::PI.powf(-0.5) * (2.0 * std::f64::consts::PI).sqrt()).sqrt();
        assert!((v - want).abs() < 1e-10);
        assert!(weighted_lp_norm(&h0, 1.0, &Weight::gaussian(1.0).unwrap(), &opts).is_err());
    }

    #[test]
    fn sequence_singletons_and_pairs() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 3, false).unwrap();
        let w = Weight::gaussian(-1.0).unwrap();
        let id = TileId { j: 2, pos: vec![30] };
        let mut s = FrameSequence::zeros(&grid, 3).unwrap();
        assert_eq!(seq_besov_norm(&s, &b(1.0, 2.0, 2.0), &w, &grid).unwrap().value, 0.0);
        assert_eq!(seq_triebel_norm(&s, &f(1.0, 2.0, 2.0), &w, &grid).unwrap().value, 0.0);
        s.set(&grid, &id, Complex64::new(1.0, 0.0)).unwrap();
        let t = grid.tile(&id);
        for (a, p, q) in [(1.0, 2.0, 2.0), (0.5, 1.0, 3.0), (-0.2, 3.0, f64::INFINITY)] {
            let want = 2f64.powf(2.0 * a) * w.mass_box(&t.lo, &t.hi).unwrap().powf(1.0 / p) / t.measure.sqrt();
            let x = seq_besov_norm(&s, &b(a, p, q), &w, &grid).unwrap().value;
            let y = seq_triebel_norm(&s, &f(a, p, q), &w, &grid).unwrap().value;
            assert_eq!(x, y);
            assert!((x - want).abs() < 1e-13 * want);
        }
        let id2 = TileId { j: 2, pos: vec![33] };
        let mut s2 = FrameSequence::zeros(&grid, 3).unwrap();
        s2.set(&grid, &id2, Complex64::new(0.0, -2.0)).unwrap();
        let p = 1.5;
        let v1 = seq_triebel_norm(&s, &f(0.3, p, 0.7), &w, &grid).unwrap().value;
        let v2 = seq_triebel_norm(&s2, &f(0.3, p, 0.7), &w, &grid).unwrap().value;
        let both = s.linear_combination(Complex64::new(1.0, 0.0), &s2, Complex64::new(1.0, 0.0));
        let v = seq_triebel_norm(&both, &f(0.3, p, 0.7), &w, &grid).unwrap().value;
        assert!((v - (v1.powf(p) + v2.powf(p)).powf(1.0 / p)).abs() < 1e-13 * v);
    }

    #[test]
    fn sequence_q_limit() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 3, false).unwrap();
        let w = Weight::unit();
        let mut s = FrameSequence::zeros(&grid, 3).unwrap();
        for (j, p, v) in [(0usize, 3usize, 1.0), (1, 10, 2.0), (2, 40, 0.5), (3, 100, 3.0)] {
            s.set(&grid, &TileId { j, pos: vec![p] }, Complex64::new(v, 0.0)).unwrap();
        }
        let sup = seq_besov_norm(&s, &b(0.5, 2.0, f64::INFINITY), &w, &grid).unwrap().value;
        let big = seq_besov_norm(&s, &b(0.5, 2.0, 400.0), &w, &grid).unwrap().value;
        assert!((big - sup).abs() < 0.01 * sup);
        let levels = seq_besov_norm(&s, &b(0.5, 2.0, 2.0), &w, &grid).unwrap().levels;
        let m = levels.iter().map(|l| l.value).fold(0.0, f64::max);
        assert!((m - sup).abs() < 1e-14 * sup);
    }

    #[test]
    fn two_dimensional_spot_check() {
        let sys = MultiplierSystem::partition(0.05).unwrap();
        let opts = NormOptions::default();
        let h = HermiteExpansion::basis(&[1, 2]);
        let v = weighted_lp_norm(&h, 2.0, &Weight::unit(), &opts).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let x = besov_norm(&h, &sys, &b(0.0, 2.0, 2.0), &Weight::power(0.5).unwrap(), 1, &opts).unwrap();
        let y = triebel_norm(&h, &sys, &f(0.0, 2.0, 2.0), &Weight::power(0.5).unwrap(), 1, &opts).unwrap();
        assert!((x.value - y.value).abs() < 1e-10 * x.value);
    }
}
