//! The Hermite lower-bound property in tile form and ball form, and probes of
//! the embeddings between weighted sequence spaces.
//!
//! Finite scans cannot settle asymptotic statements, so every scan yields a
//! three-valued verdict from its two deepest levels: `Pass` when the tracked
//! quantity moves by less than a factor 2, `Fail` when it degrades by at least
//! a factor 4, `Inconclusive` otherwise.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::FrameSequence;
use crate::norms::{sequence_norm, Scale, SpaceParams};
use crate::tiles::{TileGrid, TILE_CAP};
use crate::weights::{critical_radius, Weight};

/// Per-level cap on the support of random sequences.
pub const SUPPORT_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Verdict for a quantity that should stay bounded below; `prev` and `last`
/// are its values on the two deepest levels.
pub fn floor_verdict(prev: f64, last: f64) -> Verdict {
    if !(prev > 0.0) || last <= 0.0 {
        return if last <= 0.0 { Verdict::Fail } else { Verdict::Inconclusive };
    }
    let r = last / prev;
    if r >= 0.5 {
        Verdict::Pass
    } else if r <= 0.25 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict for a quantity that should stay bounded above.
pub fn ceiling_verdict(prev: f64, last: f64) -> Verdict {
    if last.is_infinite() {
        return Verdict::Fail;
    }
    floor_verdict(1.0 / prev, 1.0 / last)
}

/// Source `(α₂, p₂, q₂)`, target `(α₁, p₁, q₁)` and the order `γ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmbeddingParams {
    pub source: SpaceParams,
    pub target: SpaceParams,
    pub gamma: f64,
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

impl EmbeddingParams {
    pub fn new(source: SpaceParams, target: SpaceParams, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("γ must be positive and finite"));
        }
        if source.scale != target.scale {
            return Err(Error::invalid("source and target must use the same scale"));
        }
        let lhs = target.alpha - gamma * inv(target.p);
        let rhs = source.alpha - gamma * inv(source.p);
        if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs().max(rhs.abs())) {
            return Err(Error::invalid(format!(
                "α₁ − γ/p₁ = {lhs} differs from α₂ − γ/p₂ = {rhs}"
            )));
        }
        if target.alpha > source.alpha {
            return Err(Error::invalid("the target smoothness must not exceed the source's"));
        }
        if source.scale == Scale::Besov && (source.p > target.p || source.q > target.q) {
            return Err(Error::invalid("Besov embeddings need p₂ ≤ p₁ and q₂ ≤ q₁"));
        }
        Ok(EmbeddingParams { source, target, gamma })
    }

    /// `1/p₁ − 1/p₂`, the exponent of `w(R)2^{jγ}` in the singleton ratio.
    pub fn singleton_exponent(&self) -> f64 {
        inv(self.target.p) - inv(self.source.p)
    }
}

/// A tile singled out by a scan.
#[derive(Debug, Clone, Serialize)]
pub struct TileWitness {
    pub j: usize,
    pub alpha: Vec<i64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `ln w(R)`.
    pub log_mass: f64,
    pub value: f64,
    pub log_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelExtreme {
    pub j: usize,
    /// Extreme over levels `0..=j`.
    pub cumulative: f64,
    pub level: f64,
    pub log_cumulative: f64,
    pub log_level: f64,
    pub witness: TileWitness,
}

/// Minimum of `w(R)2^{jγ}` over all tiles of levels `0..=J`.
#[derive(Debug, Clone, Serialize)]
pub struct TileBoundReport {
    pub gamma: f64,
    pub levels: Vec<LevelExtreme>,
    pub min: f64,
    pub log_min: f64,
    pub argmin: TileWitness,
    pub verdict: Verdict,
}

/// `(ln w(R), flat index)` for every tile of a level, in parallel.
fn level_masses(w: &Weight, grid: &TileGrid, j: usize) -> Result<Vec<f64>> {
    let count = grid.tile_count(j);
    if count > TILE_CAP {
        return Err(Error::Resource {
            what: "tile scan",
            needed: count,
            cap: TILE_CAP,
        });
    }
    (0..count as usize)
        .into_par_iter()
        .map(|i| {
            let t = grid.tile_at(j, i);
            w.log_mass_box(&t.lo, &t.hi)
        })
        .collect()
}

fn witness(grid: &TileGrid, j: usize, i: usize, log_mass: f64, log_value: f64) -> TileWitness {
    let t = grid.tile_at(j, i);
    TileWitness {
        j,
        alpha: t.alpha,
        lo: t.lo,
        hi: t.hi,
        log_mass,
        value: log_value.exp(),
        log_value,
    }
}

/// Scans the log-score `score(j, ln w(R))` over every tile and tracks the per-level and
/// cumulative extremes.
fn scan_tiles(
    w: &Weight,
    grid: &TileGrid,
    max_level: usize,
    minimize: bool,
    score: impl Fn(usize, f64) -> f64,
) -> Result<Vec<LevelExtreme>> {
    w.check_dim(grid.dim())?;
    if max_level > grid.max_level() {
        return Err(Error::invalid(format!(
            "scan depth {max_level} exceeds the grid's {}",
            grid.max_level()
        )));
    }
    let better = |a: f64, b: f64| if minimize { a < b } else { a > b };
    let mut out: Vec<LevelExtreme> = Vec::new();
    for j in 0..=max_level {
        let masses = level_masses(w, grid, j)?;
        let (mut bi, mut bv) = (0, score(j, masses[0]));
        for (i, &lm) in masses.iter().enumerate().skip(1) {
            let v = score(j, lm);
            if better(v, bv) {
                bi = i;
                bv = v;
            }
        }
        let wit = witness(grid, j, bi, masses[bi], bv);
        let cumulative = match out.last() {
            Some(prev) if !better(bv, prev.log_cumulative) => prev.log_cumulative,
            _ => bv,
        };
        out.push(LevelExtreme {
            j,
            cumulative: cumulative.exp(),
            level: bv.exp(),
            log_cumulative: cumulative,
            log_level: bv,
            witness: wit,
        });
    }
    Ok(out)
}

/// `(ln extreme, ln(last/previous))` of the cumulative extremes.
fn deepest_pair(levels: &[LevelExtreme]) -> (f64, f64) {
    let last = levels.last().expect("at least one level").log_cumulative;
    let prev = if levels.len() > 1 { levels[levels.len() - 2].log_cumulative } else { last };
    let step = if last == prev { 0.0 } else { last - prev };
    (last, step)
}

fn cumulative_witness(levels: &[LevelExtreme]) -> TileWitness {
    let target = levels.last().expect("at least one level").log_cumulative;
    levels
        .iter()
        .find(|l| l.log_level == target)
        .expect("cumulative extreme is attained")
        .witness
        .clone()
}

/// Tile form of the lower-bound property: `w(R) ≥ C 2^{−jγ}`.
pub fn lower_bound_tiles(w: &Weight, grid: &TileGrid, gamma: f64, max_level: usize) -> Result<TileBoundReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("γ must be positive"));
    }
    let ln2 = std::f64::consts::LN_2;
    let levels = scan_tiles(w, grid, max_level, true, |j, lm| lm + j as f64 * gamma * ln2)?;
    let (last, step) = deepest_pair(&levels);
    Ok(TileBoundReport {
        gamma,
        min: last.exp(),
        log_min: last,
        argmin: cumulative_witness(&levels),
        verdict: if last == f64::NEG_INFINITY { Verdict::Fail } else { floor_verdict(1.0, step.exp()) },
        levels,
    })
}

/// Centers and radii for the ball form, one nested set per depth.
#[derive(Debug, Clone, Serialize)]
pub struct BallPlan {
    pub dim: usize,
    /// `X_d`: centers satisfy `|x|_∞ ≤ X_d` at depth `d`.
    pub extents: Vec<f64>,
    pub centers_per_axis: usize,
}

impl BallPlan {
    /// Extents matched to the outer tile boundary of each level of `grid`.
    pub fn matched(grid: &TileGrid, depth: usize) -> Self {
        BallPlan {
            dim: grid.dim(),
            extents: (0..=depth.min(grid.max_level())).map(|d| grid.level(d).outer_half()).collect(),
            centers_per_axis: if grid.dim() == 1 { 129 } else { 33 },
        }
    }

    /// Samples `(x, r)` of depth `d`: an odd lattice of centers in
    /// `[−X_d, X_d]ⁿ` and radii `ρ(x)2^{−i}`, `i = 0..=d+2`.
    pub fn samples(&self, d: usize) -> Vec<(Vec<f64>, f64)> {
        let m = self.centers_per_axis | 1;
        let x_max = self.extents[d];
        let axis: Vec<f64> = (0..m).map(|i| -x_max + 2.0 * x_max * i as f64 / (m - 1) as f64).collect();
        let total = m.pow(self.dim as u32);
        let mut out = Vec::new();
        for mut c in 0..total {
            let mut x = vec![0.0; self.dim];
            for a in (0..self.dim).rev() {
                x[a] = axis[c % m];
                c /= m;
            }
            let rho = critical_radius(&x);
            for i in 0..=d + 2 {
                out.push((x.clone(), rho * 2f64.powi(-(i as i32))));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BallWitness {
    pub center: Vec<f64>,
    pub radius: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BallDepth {
    pub depth: usize,
    pub extent: f64,
    pub min: f64,
    pub witness: BallWitness,
}

/// Minimum of `w(B(x, r))/r^γ` over `0 < r ≤ ρ(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct BallBoundReport {
    pub gamma: f64,
    pub depths: Vec<BallDepth>,
    pub min: f64,
    pub argmin: BallWitness,
    pub verdict: Verdict,
}

/// Ball form of the lower-bound property.
pub fn lower_bound_balls(w: &Weight, gamma: f64, plan: &BallPlan) -> Result<BallBoundReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("γ must be positive"));
    }
    if plan.extents.is_empty() {
        return Err(Error::invalid("the ball plan has no depths"));
    }
    w.check_dim(plan.dim)?;
    let mut depths: Vec<BallDepth> = Vec::new();
    for d in 0..plan.extents.len() {
        let rows: Vec<Result<(f64, Vec<f64>, f64)>> = plan
            .samples(d)
            .into_par_iter()
            .map(|(x, r)| Ok((w.log_mass_ball(&x, r)? - gamma * r.ln(), x, r)))
            .collect();
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        for row in rows {
            let row = row?;
            if best.as_ref().map_or(true, |b| row.0 < b.0) {
                best = Some(row);
            }
        }
        let (lv, x, r) = best.expect("nonempty sample");
        let mut entry = BallDepth {
            depth: d,
            extent: plan.extents[d],
            min: lv.exp(),
            witness: BallWitness {
                center: x,
                radius: r,
                ratio: lv.exp(),
            },
        };
        // Running minimum over depths.
        if let Some(prev) = depths.last() {
            if prev.min < entry.min {
                entry.min = prev.min;
                entry.witness = prev.witness.clone();
            }
        }
        depths.push(entry);
    }
    let last = depths.last().expect("nonempty");
    let prev = if depths.len() > 1 { &depths[depths.len() - 2] } else { last };
    Ok(BallBoundReport {
        gamma,
        min: last.min,
        argmin: last.witness.clone(),
        verdict: floor_verdict(prev.min, last.min),
        depths,
    })
}

/// Singleton ratios `‖e_R‖_{target}/‖e_R‖_{source} = (w(R)2^{jγ})^{1/p₁−1/p₂}`.
#[derive(Debug, Clone, Serialize)]
pub struct NecessityReport {
    pub params: EmbeddingParams,
    pub levels: Vec<LevelExtreme>,
    pub max: f64,
    pub log_max: f64,
    pub argmax: TileWitness,
    /// `max_J / max_{J−1}` of the cumulative maxima.
    pub growth: f64,
    pub log_growth: f64,
    pub verdict: Verdict,
}

/// The singleton ratio at a tile of level `j` with `ln w(R) = log_mass`.
pub fn singleton_ratio(params: &EmbeddingParams, j: usize, log_mass: f64) -> f64 {
    log_singleton_ratio(params, j, log_mass).exp()
}

pub fn log_singleton_ratio(params: &EmbeddingParams, j: usize, log_mass: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let (s, t) = (&params.source, &params.target);
    j as f64 * (t.alpha - s.alpha) * ln2 + (inv(t.p) - inv(s.p)) * log_mass
}

pub fn necessity_probe(
    params: &EmbeddingParams,
    w: &Weight,
    grid: &TileGrid,
    max_level: usize,
) -> Result<NecessityReport> {
    let levels = scan_tiles(w, grid, max_level, false, |j, lm| log_singleton_ratio(params, j, lm))?;
    let (last, step) = deepest_pair(&levels);
    Ok(NecessityReport {
        params: *params,
        max: last.exp(),
        log_max: last,
        argmax: cumulative_witness(&levels),
        growth: step.exp(),
        log_growth: step,
        verdict: if last == f64::INFINITY { Verdict::Fail } else { ceiling_verdict(1.0, step.exp()) },
        levels,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    /// Bin edges in `log10(ratio)`.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Ratios `‖s‖_{target}/‖s‖_{source}` over random sparse sequences.
#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyReport {
    pub params: EmbeddingParams,
    pub trials: usize,
    pub seed: u64,
    pub max_level: usize,
    /// Empirical constant: the largest ratio seen.
    pub constant: f64,
    /// Largest ratio over the first half of the trials.
    pub constant_half: f64,
    pub min: f64,
    pub median: f64,
    pub quantile_90: f64,
    pub histogram: Vec<HistogramBin>,
    pub ratios: Vec<f64>,
    pub verdict: Verdict,
}

/// A random sparse sequence: per level, a uniform support size up to the cap,
/// uniformly drawn tiles and log-normal magnitudes with random signs.
pub fn random_sequence(grid: &TileGrid, max_level: usize, rng: &mut ChaCha8Rng) -> Result<FrameSequence> {
    let mut s = FrameSequence::zeros(grid, max_level)?;
    let ln = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    for j in 0..=max_level {
        let count = s.level(j).len();
        let k = rng.gen_range(0..=SUPPORT_CAP.min(count));
        for i in sample(rng, count, k).into_iter() {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            s.level_mut(j)[i] = Complex64::new(sign * ln.sample(rng), 0.0);
        }
    }
    if s.is_zero() {
        let j = rng.gen_range(0..=max_level);
        let i = rng.gen_range(0..s.level(j).len());
        s.level_mut(j)[i] = Complex64::new(ln.sample(rng), 0.0);
    }
    Ok(s)
}

/// Trial `t` draws from the stream `t` of a generator seeded with `seed`, so
/// results do not depend on scheduling.
pub fn sufficiency_probe(
    params: &EmbeddingParams,
    w: &Weight,
    grid: &TileGrid,
    max_level: usize,
    trials: usize,
    seed: u64,
) -> Result<SufficiencyReport> {
    if trials < 2 {
        return Err(Error::invalid("at least two trials are needed"));
    }
    w.check_dim(grid.dim())?;
    let ratios: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let s = random_sequence(grid, max_level, &mut rng)?;
            let top = sequence_norm(&s, &params.target, w, grid)?.value;
            let bottom = sequence_norm(&s, &params.source, w, grid)?.value;
            Ok(top / bottom)
        })
        .collect();
    let ratios = ratios.into_iter().collect::<Result<Vec<_>>>()?;
    let fold_max = |xs: &[f64]| xs.iter().copied().fold(0.0f64, f64::max);
    let constant = fold_max(&ratios);
    let constant_half = fold_max(&ratios[..trials / 2]);
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| sorted[((q * (trials - 1) as f64).round() as usize).min(trials - 1)];
    Ok(SufficiencyReport {
        params: *params,
        trials,
        seed,
        max_level,
        constant,
        constant_half,
        min: sorted[0],
        median: quantile(0.5),
        quantile_90: quantile(0.9),
        histogram: histogram(&sorted, 20),
        verdict: ceiling_verdict(constant_half, constant),
        ratios,
    })
}

/// Equal-width bins in `log10` over the sorted positive values.
pub fn histogram(sorted: &[f64], bins: usize) -> Vec<HistogramBin> {
    let logs: Vec<f64> = sorted.iter().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
    if logs.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = (logs[0], logs[logs.len() - 1]);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in logs {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}
