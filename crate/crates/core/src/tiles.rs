//! Tiles built on the zeros of `H_{2N_j}`: nodes, intervals, measures,
//! Christoffel weights, subdivided cubes, and measured geometry constants.
//!
//! Every tile at level `j` is a product of one-dimensional intervals, so a
//! level stores its one-dimensional data once and tiles are addressed by a
//! tuple of axis positions. Axis position `p ∈ [0, 2N_j)` corresponds to the
//! zero index `α = p − N_j` for `p < N_j` and `α = p − N_j + 1` otherwise.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermite::{christoffel_normalized, hermite_zeros, ZeroSet};

pub const DEFAULT_DELTA_STAR: f64 = 1.0 / 40.0;

/// Upper bound on stored tiles per level for enumeration helpers.
pub const TILE_CAP: u128 = 50_000_000;

/// `N_j = ⌊(1 + 11δ⋆)(4/π)² 4^j⌋ + 3`.
pub fn level_size(delta_star: f64, j: usize) -> usize {
    let c = (1.0 + 11.0 * delta_star) * (4.0 / std::f64::consts::PI).powi(2);
    (c * 4f64.powi(j as i32)).floor() as usize + 3
}

/// One-dimensional data of a level.
#[derive(Debug, Clone)]
pub struct Level {
    pub j: usize,
    /// `N_j`.
    pub size: usize,
    pub zeros: ZeroSet,
    /// Node coordinate per axis position.
    pub nodes: Vec<f64>,
    /// Closed interval per axis position.
    pub intervals: Vec<(f64, f64)>,
    /// `ln τ(2N_j, ζ)` per axis position.
    pub log_tau: Vec<f64>,
    /// Subdivision breakpoints per axis position (if requested).
    pub pieces: Option<Vec<Vec<f64>>>,
}

impl Level {
    fn build(j: usize, delta_star: f64, subdivide: bool) -> Result<Self> {
        let size = level_size(delta_star, j);
        let zeros = hermite_zeros(2 * size)?;
        let pos = zeros.positive();
        let top = pos[size - 1] + 2f64.powf(-(j as f64) / 6.0);
        let mut right = Vec::with_capacity(size);
        for nu in 0..size {
            let lo = if nu == 0 { 0.0 } else { 0.5 * (pos[nu - 1] + pos[nu]) };
            let hi = if nu + 1 == size { top } else { 0.5 * (pos[nu] + pos[nu + 1]) };
            right.push((lo, hi));
        }
        let mut intervals: Vec<(f64, f64)> = right.iter().rev().map(|&(a, b)| (-b, -a)).collect();
        intervals.extend(right.iter().copied());
        let nodes: Vec<f64> = zeros.as_slice().to_vec();
        let log_tau: Vec<f64> = nodes
            .iter()
            .map(|&z| christoffel_normalized(2 * size, 0, z).1)
            .collect();
        let pieces = subdivide.then(|| {
            let shortest = intervals.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
            let target = shortest.min(2f64.powi(-(j as i32)));
            intervals
                .iter()
                .map(|&(a, b)| {
                    let m = ((b - a) / target * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                    let mut br: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
                    br[m] = b;
                    br
                })
                .collect()
        });
        Ok(Level {
            j,
            size,
            zeros,
            nodes,
            intervals,
            log_tau,
            pieces,
        })
    }

    /// Number of axis positions, `2N_j`.
    pub fn positions(&self) -> usize {
        2 * self.size
    }

    /// Zero index `α` of an axis position.
    pub fn alpha(&self, p: usize) -> i64 {
        let n = self.size as i64;
        let p = p as i64;
        if p < n {
            p - n
        } else {
            p - n + 1
        }
    }

    /// Axis position of a zero index `α ∈ {±1, …, ±N_j}`.
    pub fn position(&self, alpha: i64) -> Option<usize> {
        let n = self.size as i64;
        match alpha {
            a if a >= 1 && a <= n => Some((a + n - 1) as usize),
            a if a <= -1 && a >= -n => Some((a + n) as usize),
            _ => None,
        }
    }

    /// Half-width of `Q_j = Q(0, ζ_{N_j} + 2^{−j/6})`.
    pub fn outer_half(&self) -> f64 {
        self.intervals.last().unwrap().1
    }

    pub fn length(&self, p: usize) -> f64 {
        let (a, b) = self.intervals[p];
        b - a
    }

    /// Axis position containing `t`: intervals are half-open `[lo, hi)`
    /// except the last, which is closed.
    pub fn locate_1d(&self, t: f64) -> Option<usize> {
        let last = self.positions() - 1;
        if !(t >= self.intervals[0].0 && t <= self.intervals[last].1) {
            return None;
        }
        let p = self.intervals.partition_point(|&(a, _)| a <= t);
        Some((p - 1).min(last))
    }
}

/// Identity of a tile: level and axis positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileId {
    pub j: usize,
    pub pos: Vec<usize>,
}

/// Geometric data of a single tile.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub id: TileId,
    /// Zero indices `α`.
    pub alpha: Vec<i64>,
    pub node: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `|R|`.
    pub measure: f64,
    /// `ln τ_R`.
    pub log_tau: f64,
}

impl Tile {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(t, (a, b))| *t >= *a && *t <= *b)
    }
}

/// Tile families `E_0, …, E_J` in dimension `n`.
#[derive(Debug, Clone)]
pub struct TileGrid {
    dim: usize,
    delta_star: f64,
    levels: Vec<Level>,
}

impl TileGrid {
    /// Builds levels `0..=max_level`; levels are built concurrently.
    pub fn build(n: usize, delta_star: f64, max_level: usize, subdivide: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(delta_star > 0.0 && delta_star < 1.0 / 37.0) {
            return Err(Error::invalid(format!("δ⋆ must lie in (0, 1/37), got {delta_star}")));
        }
        if max_level > 12 {
            return Err(Error::Resource {
                what: "tile levels",
                needed: max_level as u128,
                cap: 12,
            });
        }
        let levels = (0..=max_level)
            .into_par_iter()
            .map(|j| Level::build(j, delta_star, subdivide))
            .collect::<Result<Vec<_>>>()?;
        Ok(TileGrid {
            dim: n,
            delta_star,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta_star(&self) -> f64 {
        self.delta_star
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, j: usize) -> &Level {
        &self.levels[j]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn is_subdivided(&self) -> bool {
        self.levels[0].pieces.is_some()
    }

    /// `|E_j| = (2N_j)ⁿ`.
    pub fn tile_count(&self, j: usize) -> u128 {
        (self.levels[j].positions() as u128).pow(self.dim as u32)
    }

    /// Axis positions of the tile with flat index `i` (first axis slowest).
    pub fn unflatten(&self, j: usize, mut i: usize) -> Vec<usize> {
        let m = self.levels[j].positions();
        let mut pos = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            pos[a] = i % m;
            i /= m;
        }
        pos
    }

    pub fn flatten(&self, j: usize, pos: &[usize]) -> usize {
        let m = self.levels[j].positions();
        pos.iter().fold(0, |acc, &p| acc * m + p)
    }

    pub fn tile(&self, id: &TileId) -> Tile {
        let lev = &self.levels[id.j];
        let lo: Vec<f64> = id.pos.iter().map(|&p| lev.intervals[p].0).collect();
        let hi: Vec<f64> = id.pos.iter().map(|&p| lev.intervals[p].1).collect();
        Tile {
            id: id.clone(),
            alpha: id.pos.iter().map(|&p| lev.alpha(p)).collect(),
            node: id.pos.iter().map(|&p| lev.nodes[p]).collect(),
            measure: lo.iter().zip(&hi).map(|(a, b)| b - a).product(),
            log_tau: id.pos.iter().map(|&p| lev.log_tau[p]).sum(),
            lo,
            hi,
        }
    }

    pub fn tile_at(&self, j: usize, flat: usize) -> Tile {
        self.tile(&TileId {
            j,
            pos: self.unflatten(j, flat),
        })
    }

    /// All tiles of level `j`, in flat order.
    pub fn tiles(&self, j: usize) -> Result<Vec<Tile>> {
        let count = self.tile_count(j);
        if count > TILE_CAP {
            return Err(Error::Resource {
                what: "tile enumeration",
                needed: count,
                cap: TILE_CAP,
            });
        }
        Ok((0..count as usize).map(|i| self.tile_at(j, i)).collect())
    }

    /// The level-`j` tile containing `x`, or `None` outside `Q_j`.
    pub fn locate(&self, j: usize, x: &[f64]) -> Option<TileId> {
        if x.len() != self.dim || j > self.max_level() {
            return None;
        }
        let lev = &self.levels[j];
        let pos = x.iter().map(|&t| lev.locate_1d(t)).collect::<Option<Vec<_>>>()?;
        Some(TileId { j, pos })
    }

    /// Subdivided cubes of a tile as `(lo, hi)` boxes.
    pub fn subcubes(&self, id: &TileId) -> Option<Vec<(Vec<f64>, Vec<f64>)>> {
        let pieces = self.levels[id.j].pieces.as_ref()?;
        let axes: Vec<&Vec<f64>> = id.pos.iter().map(|&p| &pieces[p]).collect();
        let total: usize = axes.iter().map(|b| b.len() - 1).product();
        Some(
            (0..total)
                .map(|mut i| {
                    let mut lo = vec![0.0; self.dim];
                    let mut hi = vec![0.0; self.dim];
                    for a in (0..self.dim).rev() {
                        let m = axes[a].len() - 1;
                        let k = i % m;
                        i /= m;
                        lo[a] = axes[a][k];
                        hi[a] = axes[a][k + 1];
                    }
                    (lo, hi)
                })
                .collect(),
        )
    }

    pub fn to_export(&self) -> GridExport {
        GridExport {
            n: self.dim,
            delta_star: self.delta_star,
            levels: self
                .levels
                .iter()
                .map(|l| LevelExport {
                    j: l.j,
                    size: l.size,
                    tile_count: (l.positions() as u128).pow(self.dim as u32),
                    outer_half: l.outer_half(),
                    alpha: (0..l.positions()).map(|p| l.alpha(p)).collect(),
                    nodes: l.nodes.clone(),
                    intervals: l.intervals.iter().map(|&(a, b)| [a, b]).collect(),
                    lengths: (0..l.positions()).map(|p| l.length(p)).collect(),
                    log_tau: l.log_tau.clone(),
                    pieces: l.pieces.as_ref().map(|p| p.iter().map(|b| b.len() - 1).collect()),
                })
                .collect(),
        }
    }
}

/// Grid export: one-dimensional factors per level; tiles are their products.
#[derive(Debug, Clone, Serialize)]
pub struct GridExport {
    pub n: usize,
    pub delta_star: f64,
    pub levels: Vec<LevelExport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelExport {
    pub j: usize,
    #[serde(rename = "N")]
    pub size: usize,
    pub tile_count: u128,
    pub outer_half: f64,
    pub alpha: Vec<i64>,
    pub nodes: Vec<f64>,
    pub intervals: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
    pub log_tau: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<usize>>,
}

/// Measured constants of the tile geometry at one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelGeometry {
    pub j: usize,
    /// `R ⊂ Q(x_R, c₀2^{−j})` for tiles with `|x_R| ≤ (1+4δ⋆)2^{j+1}`.
    pub c0: f64,
    /// `Q(x_R, c₁2^{−j}) ⊂ R`.
    pub c1: f64,
    /// `R ⊂ Q(x_R, c₂2^{−j/3})`.
    pub c2: f64,
    /// `Q_j ⊂ Q(0, c₃2^j)`.
    pub c3: f64,
    /// Subdivided cubes satisfy `Q(x_Q, c₄2^{−j−1}) ⊂ Q ⊂ Q(x_Q, c₄2^{−j})`.
    pub c4: Option<f64>,
    /// `Q(0, 2^j) ⊂ Q_j`.
    pub inner_contained: bool,
    /// Whether the subdivided-cube bounds hold with the fitted `c₄`.
    pub cubes_ok: Option<bool>,
    /// `|Σ|R| − |Q_j|| / |Q_j|`.
    pub partition_error: f64,
    /// `max_R max(τ_R/|R|, |R|/τ_R)` over tiles with `|x_R|_∞ ≤ 2^j`.
    pub tau_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub n: usize,
    pub delta_star: f64,
    pub levels: Vec<LevelGeometry>,
    /// Constants valid for every level.
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: Option<f64>,
    /// Largest ratio between consecutive levels of each constant, over
    /// levels `j ≥ 2`.
    pub stability: [f64; 5],
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Measures the tile containment constants at every level of the grid.
pub fn verify_geometry(grid: &TileGrid) -> GeometryReport {
    let n = grid.dim();
    let ds = grid.delta_star();
    let levels: Vec<LevelGeometry> = grid
        .levels()
        .iter()
        .map(|lev| {
            let j = lev.j;
            let scale = 2f64.powi(j as i32);
            let m = lev.positions();
            let zeta1 = lev.zeros.zeta(1);
            let limit = (1.0 + 4.0 * ds) * 2.0 * scale;
            let mut c0 = 0.0f64;
            let mut c1 = f64::INFINITY;
            let mut c2 = 0.0f64;
            for p in 0..m {
                let (a, b) = lev.intervals[p];
                let x = lev.nodes[p];
                let outer = (x - a).max(b - x);
                let inner = (x - a).min(b - x);
                // Some tile with this factor has |x_R|² = x² + (n−1)ζ₁².
                if x * x + (n - 1) as f64 * zeta1 * zeta1 <= limit * limit {
                    c0 = c0.max(outer * scale);
                }
                c1 = c1.min(inner * scale);
                c2 = c2.max(outer * scale.powf(1.0 / 3.0));
            }
            let half = lev.outer_half();
            let c3 = half / scale;
            let sum_len: f64 = (0..m).map(|p| lev.length(p)).sum();
            let partition_error = ((sum_len / (2.0 * half)).powi(n as i32) - 1.0).abs();
            let (c4, cubes_ok) = match &lev.pieces {
                Some(pieces) => {
                    let halves = pieces.iter().flat_map(|b| b.windows(2).map(|w| 0.5 * (w[1] - w[0])));
                    let (mn, mx) = halves.fold((f64::INFINITY, 0.0f64), |(a, b), h| (a.min(h), b.max(h)));
                    let c4 = mx * scale;
                    let covered = pieces
                        .iter()
                        .zip(&lev.intervals)
                        .all(|(b, &(lo, hi))| b[0] == lo && *b.last().unwrap() == hi);
                    (Some(c4), Some(covered && mn * scale >= 0.5 * c4 * (1.0 - 1e-12)))
                }
                None => (None, None),
            };
            let tau_ratio = (0..m)
                .filter(|&p| lev.nodes[p].abs() <= scale)
                .map(|p| {
                    let r = lev.log_tau[p] - lev.length(p).ln();
                    r.abs().exp()
                })
                .fold(1.0f64, f64::max)
                .powi(n as i32);
            LevelGeometry {
                j,
                c0,
                c1,
                c2,
                c3,
                c4,
                inner_contained: half >= scale,
                cubes_ok,
                partition_error,
                tau_ratio,
            }
        })
        .collect();

    let fold_max = |f: &dyn Fn(&LevelGeometry) -> f64| levels.iter().map(f).fold(0.0f64, f64::max);
    let c0 = fold_max(&|l| l.c0);
    let c1 = levels.iter().map(|l| l.c1).fold(f64::INFINITY, f64::min);
    let c2 = fold_max(&|l| l.c2);
    let c3 = fold_max(&|l| l.c3);
    let c4 = levels.iter().map(|l| l.c4).collect::<Option<Vec<_>>>().map(|v| v.into_iter().fold(0.0, f64::max));

    let ratio = |a: f64, b: f64| if a > b { a / b } else { b / a };
    let mut stability = [1.0f64; 5];
    for w in levels.windows(2).filter(|w| w[0].j >= 2) {
        let (a, b) = (&w[0], &w[1]);
        stability[0] = stability[0].max(ratio(a.c0, b.c0));
        stability[1] = stability[1].max(ratio(a.c1, b.c1));
        stability[2] = stability[2].max(ratio(a.c2, b.c2));
        stability[3] = stability[3].max(ratio(a.c3, b.c3));
        if let (Some(x), Some(y)) = (a.c4, b.c4) {
            stability[4] = stability[4].max(ratio(x, y));
        }
    }

    let mut failures = Vec::new();
    for l in &levels {
        if !l.inner_contained {
            failures.push(format!("level {}: Q(0, 2^j) not contained in Q_j", l.j));
        }
        if !(l.c1 > 0.0) {
            failures.push(format!("level {}: a tile has empty interior around its node", l.j));
        }
        if l.partition_error > 1e-12 {
            failures.push(format!("level {}: partition error {:e}", l.j, l.partition_error));
        }
        if l.cubes_ok == Some(false) {
            failures.push(format!("level {}: subdivided cubes violate the size bounds", l.j));
        }
        if ![l.c0, l.c2, l.c3].iter().all(|c| c.is_finite()) {
            failures.push(format!("level {}: non-finite constant", l.j));
        }
    }
    for (name, s) in ["c0", "c1", "c2", "c3", "c4"].iter().zip(stability) {
        if s > 2.0 {
            failures.push(format!("{name} varies by a factor {s} between levels"));
        }
    }
    GeometryReport {
        n,
        delta_star: ds,
        pass: failures.is_empty(),
        levels,
        c0,
        c1,
        c2,
        c3,
        c4,
        stability,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes() {
        let ns: Vec<usize> = (0..6).map(|j| level_size(DEFAULT_DELTA_STAR, j)).collect();
        assert_eq!(ns, vec![5, 11, 36, 135, 532, 2119]);
    }

    #[test]
    fn alpha_positions_round_trip() {
        let g = TileGrid::build(1, DEFAULT_DELTA_STAR, 1, false).unwrap();
        let lev = g.level(1);
        for p in 0..lev.positions() {
            assert_eq!(lev.position(lev.alpha(p)), Some(p));
            assert_ne!(lev.alpha(p), 0);
        }
        assert_eq!(lev.position(0), None);
        assert_eq!(lev.alpha(0), -11);
        assert_eq!(lev.alpha(21), 11);
    }

    #[test]
    fn level_zero_union() {
        let g = TileGrid::build(1, DEFAULT_DELTA_STAR, 0, false).unwrap();
        let lev = g.level(0);
        let top = lev.zeros.zeta(5) + 1.0;
        assert_eq!(lev.intervals[0].0, -top);
        assert_eq!(lev.intervals.last().unwrap().1, top);
        for w in lev.intervals.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(g.tile_count(0), 10);
    }

    #[test]
    fn intervals_contain_nodes_and_are_symmetric() {
        let g = TileGrid::build(1, DEFAULT_DELTA_STAR, 3, false).unwrap();
        for lev in g.levels() {
            let m = lev.positions();
            for p in 0..m {
                let (a, b) = lev.intervals[p];
                assert!(a < lev.nodes[p] && lev.nodes[p] < b);
                assert_eq!(lev.intervals[m - 1 - p], (-b, -a));
                assert!(lev.log_tau[p].is_finite());
            }
        }
    }

    #[test]
    fn locate_examples() {
        let g = TileGrid::build(2, DEFAULT_DELTA_STAR, 2, false).unwrap();
        let id = g.locate(1, &[0.0, 0.0]).unwrap();
        let t = g.tile(&id);
        let z = g.level(1).zeros.positive();
        assert_eq!(t.alpha, vec![1, 1]);
        assert_eq!(t.lo, vec![0.0, 0.0]);
        assert_eq!(t.hi, vec![0.5 * (z[0] + z[1]); 2]);
        assert!(g.locate(1, &[100.0, 0.0]).is_none());
        let edge = g.level(1).outer_half();
        assert!(g.locate(1, &[edge, -edge]).is_some());
    }

    #[test]
    fn subdivision_covers_tiles() {
        let g = TileGrid::build(2, DEFAULT_DELTA_STAR, 2, true).unwrap();
        for j in 0..=2 {
            let total: f64 = g
                .tiles(j)
                .unwrap()
                .iter()
                .map(|t| {
                    let cubes = g.subcubes(&t.id).unwrap();
                    let vol: f64 = cubes
                        .iter()
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| y - x).product::<f64>())
                        .sum();
                    assert!((vol - t.measure).abs() < 1e-12 * t.measure);
                    vol
                })
                .sum();
            let q = (2.0 * g.level(j).outer_half()).powi(2);
            assert!((total - q).abs() < 1e-11 * q);
        }
    }

    #[test]
    fn geometry_passes() {
        let g = TileGrid::build(1, DEFAULT_DELTA_STAR, 4, true).unwrap();
        let r = verify_geometry(&g);
        assert!(r.pass, "{:?}", r.failures);
        assert!(r.c1 > 0.0);
        assert!(r.levels.iter().all(|l| l.inner_contained));
    }

    #[test]
    fn delta_star_is_validated() {
        assert!(TileGrid::build(1, 0.03, 1, false).is_err());
        assert!(TileGrid::build(1, 0.0, 1, false).is_err());
        assert!(TileGrid::build(0, 0.02, 1, false).is_err());
    }
}
