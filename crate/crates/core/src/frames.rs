//! Needlets `φ_R = τ_R^{1/2} φ_j(√L)(·, x_R)`, the cubature on tile nodes, the
//! analysis and synthesis operators, and probes of the sampling and
//! Peetre-type maximal inequalities.
//!
//! All transforms work in coefficient space with Christoffel-normalized node
//! values `g_k(ζ) = τ(2N_j, ζ)^{1/2} h_k(ζ)`, so the products
//! `τ_R^{1/2} h_μ(x_R) = Π_i g_{μ_i}(x_{R,i})` never overflow even where `τ_R`
//! itself does. In `n` dimensions the transforms are tensor contractions, one
//! axis at a time.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::HermiteExpansion;
use crate::hermite::{christoffel_normalized, eigenvalue, hermite_values};
use crate::multipliers::MultiplierSystem;
use crate::tiles::{Level, TileGrid, TileId};
use crate::weights::{maximal, CubeFamily, GridFunction, Weight};

/// Christoffel-normalized Hermite values at the nodes of one level.
#[derive(Debug, Clone)]
pub struct NodeTable {
    pub kmax: usize,
    pub positions: usize,
    values: Vec<f64>,
}

impl NodeTable {
    pub fn new(level: &Level, kmax: usize) -> Self {
        let degree = 2 * level.size;
        let rows: Vec<Vec<f64>> = level
            .nodes
            .par_iter()
            .map(|&z| christoffel_normalized(degree, kmax, z).0)
            .collect();
        NodeTable {
            kmax,
            positions: rows.len(),
            values: rows.concat(),
        }
    }

    /// A table from explicit rows, one per axis position.
    pub(crate) fn from_rows(rows: Vec<Vec<f64>>, kmax: usize) -> Self {
        NodeTable {
            kmax,
            positions: rows.len(),
            values: rows.concat(),
        }
    }

    /// `g_k` at axis position `p`.
    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * (self.kmax + 1)..(p + 1) * (self.kmax + 1)]
    }
}

/// Contracts the leading axis of `t` (shape `[d0, rest…]`) with `m` (shape
/// `[r][d0]`, given by `entry(r, i0)`), placing the new axis last.
fn contract(t: &[f64], d0: usize, r: usize, entry: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    let rest = t.len() / d0;
    let mut out = vec![0.0; rest * r];
    out.par_chunks_mut(r).enumerate().for_each(|(s, row)| {
        for (ri, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i0 in 0..d0 {
                let v = t[i0 * rest + s];
                if v != 0.0 {
                    acc += entry(ri, i0) * v;
                }
            }
            *o = acc;
        }
    });
    out
}

/// Dense tensor over `[0, kmax]ⁿ` to node values over `[0, P)ⁿ`.
fn forward(table: &NodeTable, dense: &[f64], n: usize) -> Vec<f64> {
    let k = table.kmax + 1;
    let p = table.positions;
    let mut t = dense.to_vec();
    for _ in 0..n {
        t = contract(&t, k, p, |r, i| table.values[r * k + i]);
    }
    t
}

/// Adjoint of [`forward`].
fn adjoint(table: &NodeTable, nodes: &[f64], n: usize) -> Vec<f64> {
    let k = table.kmax + 1;
    let p = table.positions;
    let mut t = nodes.to_vec();
    for _ in 0..n {
        t = contract(&t, p, k, |r, i| table.values[i * k + r]);
    }
    t
}

fn dense_index(xi: &[usize], side: usize) -> Option<usize> {
    let mut idx = 0;
    for &m in xi {
        if m >= side {
            return None;
        }
        idx = idx * side + m;
    }
    Some(idx)
}

/// `Σ_μ c_μ m(|μ|) Π_i t_{μ_i}(p_i)` at every tensor position `p`, where
/// `t` is the table. Degrees above the table's `kmax` are dropped.
pub(crate) fn tensor_values(
    table: &NodeTable,
    f: &HermiteExpansion,
    n: usize,
    m: impl Fn(usize) -> f64,
) -> Vec<Complex64> {
    let side = table.kmax + 1;
    let mut re = vec![0.0; side.pow(n as u32)];
    let mut im = vec![0.0; re.len()];
    for (xi, c) in f.iter() {
        let k: usize = xi.iter().sum();
        if k > table.kmax || c.norm_sqr() == 0.0 {
            continue;
        }
        let mk = m(k);
        if mk == 0.0 {
            continue;
        }
        if let Some(idx) = dense_index(xi, side) {
            re[idx] = c.re * mk;
            im[idx] = c.im * mk;
        }
    }
    let r = forward(table, &re, n);
    let i = if im.iter().any(|v| *v != 0.0) {
        forward(table, &im, n)
    } else {
        vec![0.0; r.len()]
    };
    r.into_iter().zip(i).map(|(a, b)| Complex64::new(a, b)).collect()
}

/// Largest degree `k` with `√(2k+n)` inside the band of scale `j`.
pub fn band_degree(sys: &MultiplierSystem, j: usize, n: usize) -> Option<usize> {
    sys.support_index_set(j, n).max_degree()
}

/// Frame coefficients `{s_R}` on levels `0..=max_level`, dense per level.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    dim: usize,
    levels: Vec<Vec<Complex64>>,
}

impl FrameSequence {
    pub fn zeros(grid: &TileGrid, max_level: usize) -> Result<Self> {
        if max_level > grid.max_level() {
            return Err(Error::invalid(format!(
                "sequence level {max_level} exceeds the grid's {}",
                grid.max_level()
            )));
        }
        let levels = (0..=max_level)
            .map(|j| {
                let c = grid.tile_count(j);
                if c > crate::tiles::TILE_CAP {
                    return Err(Error::Resource {
                        what: "frame sequence",
                        needed: c,
                        cap: crate::tiles::TILE_CAP,
                    });
                }
                Ok(vec![Complex64::new(0.0, 0.0); c as usize])
            })
            .collect::<Result<_>>()?;
        Ok(FrameSequence {
            dim: grid.dim(),
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, j: usize) -> &[Complex64] {
        &self.levels[j]
    }

    pub fn level_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.levels[j]
    }

    pub fn get(&self, grid: &TileGrid, id: &TileId) -> Complex64 {
        self.levels
            .get(id.j)
            .map(|l| l[grid.flatten(id.j, &id.pos)])
            .unwrap_or_default()
    }

    pub fn set(&mut self, grid: &TileGrid, id: &TileId, v: Complex64) -> Result<()> {
        let flat = grid.flatten(id.j, &id.pos);
        let slot = self
            .levels
            .get_mut(id.j)
            .and_then(|l| l.get_mut(flat))
            .ok_or_else(|| Error::invalid(format!("tile {id:?} is outside the sequence")))?;
        *slot = v;
        Ok(())
    }

    /// `(level, flat index, value)` for every nonzero entry.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.levels.iter().enumerate().flat_map(|(j, l)| {
            l.iter()
                .enumerate()
                .filter(|(_, v)| v.norm_sqr() > 0.0)
                .map(move |(i, v)| (j, i, *v))
        })
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero().next().is_none()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.levels.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other` on the common levels.
    pub fn linear_combination(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        let (long, short, fl, fs) = if self.levels.len() >= other.levels.len() {
            (self, other, a, b)
        } else {
            (other, self, b, a)
        };
        let mut out = long.scale(fl);
        for (lo, ls) in out.levels.iter_mut().zip(&short.levels) {
            lo.iter_mut().zip(ls).for_each(|(x, y)| *x += fs * y);
        }
        out
    }

    /// `max |s_R − t_R|`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        let d = self.linear_combination(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0));
        d.levels.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_file(&self, grid: &TileGrid) -> FrameFile {
        FrameFile {
            max_level: self.max_level(),
            entries: self
                .nonzero()
                .map(|(j, i, v)| {
                    let lev = grid.level(j);
                    FrameEntry {
                        j,
                        node: grid.unflatten(j, i).iter().map(|&p| lev.alpha(p)).collect(),
                        re: v.re,
                        im: v.im,
                    }
                })
                .collect(),
        }
    }

    pub fn from_file(file: &FrameFile, grid: &TileGrid) -> Result<Self> {
        let mut s = Self::zeros(grid, file.max_level)?;
        let mut seen = std::collections::HashSet::new();
        for e in &file.entries {
            if e.j > file.max_level {
                return Err(Error::invalid(format!("entry level {} exceeds J = {}", e.j, file.max_level)));
            }
            if e.node.len() != grid.dim() {
                return Err(Error::invalid(format!(
                    "node {:?} does not match dimension {}",
                    e.node,
                    grid.dim()
                )));
            }
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(Error::invalid("frame coefficients must be finite"));
            }
            let lev = grid.level(e.j);
            let pos = e
                .node
                .iter()
                .map(|&a| lev.position(a))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::invalid(format!("node {:?} is not a level-{} tile", e.node, e.j)))?;
            if !seen.insert((e.j, pos.clone())) {
                return Err(Error::invalid(format!("duplicate entry for node {:?} at level {}", e.node, e.j)));
            }
            s.set(grid, &TileId { j: e.j, pos }, Complex64::new(e.re, e.im))?;
        }
        Ok(s)
    }

    pub fn to_json_string(&self, grid: &TileGrid) -> Result<String> {
        crate::io::to_json_string(&self.to_file(grid))
    }

    pub fn from_json_str(s: &str, grid: &TileGrid) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?, grid)
    }
}

/// `{"J": top level, "entries": [{"j", "node": [α…], "re", "im"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    #[serde(rename = "J")]
    pub max_level: usize,
    pub entries: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub j: usize,
    pub node: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Cached node tables for the levels of a grid.
pub struct FrameEngine<'a> {
    grid: &'a TileGrid,
    tables: Vec<Option<NodeTable>>,
}

impl<'a> FrameEngine<'a> {
    /// Tables for levels `0..=top`, sized by the bands of `sys`.
    pub fn new(grid: &'a TileGrid, sys: &MultiplierSystem, top: usize) -> Result<Self> {
        if top > grid.max_level() {
            return Err(Error::invalid(format!(
                "level {top} needed but the grid stops at {}",
                grid.max_level()
            )));
        }
        let n = grid.dim();
        let tables = (0..=top)
            .map(|j| {
                band_degree(sys, j, n).map(|k| {
                    let side = (k + 1) as u128;
                    let size = side.pow(n as u32).max(grid.tile_count(j));
                    if size > crate::tiles::TILE_CAP {
                        return Err(Error::Resource {
                            what: "frame transform",
                            needed: size,
                            cap: crate::tiles::TILE_CAP,
                        });
                    }
                    Ok(NodeTable::new(grid.level(j), k))
                })
                .transpose()
            })
            .collect::<Result<_>>()?;
        Ok(FrameEngine { grid, tables })
    }

    pub fn grid(&self) -> &TileGrid {
        self.grid
    }

    fn level_forward(&self, j: usize, f: &HermiteExpansion, m: impl Fn(usize) -> f64) -> Vec<Complex64> {
        match &self.tables[j] {
            Some(table) => tensor_values(table, f, self.grid.dim(), m),
            None => vec![Complex64::new(0.0, 0.0); self.grid.tile_count(j) as usize],
        }
    }

    /// Analysis on levels `0..=top`.
    pub fn analyze(&self, sys: &MultiplierSystem, f: &HermiteExpansion, top: usize) -> Result<FrameSequence> {
        let n = self.grid.dim();
        if f.dim() != n {
            return Err(Error::invalid("expansion and grid dimensions differ"));
        }
        let mut out = FrameSequence::zeros(self.grid, top)?;
        for j in 0..=top {
            let vals = self.level_forward(j, f, |k| sys.at_degree(j, k, n));
            out.levels[j] = vals;
        }
        Ok(out)
    }

    /// Synthesis `Σ_R s_R ψ_R` in coefficient space, in `V_degree`.
    pub fn synthesize(&self, sys: &MultiplierSystem, s: &FrameSequence, degree: usize) -> Result<HermiteExpansion> {
        let n = self.grid.dim();
        if s.dim() != n {
            return Err(Error::invalid("sequence and grid dimensions differ"));
        }
        let mut out = HermiteExpansion::zero(n, degree);
        for j in 0..=s.max_level() {
            if s.levels[j].iter().all(|v| v.norm_sqr() == 0.0) {
                continue;
            }
            let table = self
                .tables
                .get(j)
                .ok_or_else(|| Error::invalid(format!("no node table for level {j}")))?;
            let Some(table) = table else { continue };
            let side = table.kmax + 1;
            let re: Vec<f64> = s.levels[j].iter().map(|v| v.re).collect();
            let im: Vec<f64> = s.levels[j].iter().map(|v| v.im).collect();
            let dr = adjoint(table, &re, n);
            let di = if im.iter().any(|v| *v != 0.0) {
                adjoint(table, &im, n)
            } else {
                vec![0.0; dr.len()]
            };
            let indices = out.indices().to_vec();
            for (xi, c) in indices.iter().zip(out.coeffs_mut()) {
                let k: usize = xi.iter().sum();
                if k > table.kmax {
                    continue;
                }
                let m = sys.at_degree(j, k, n);
                if m == 0.0 {
                    continue;
                }
                if let Some(idx) = dense_index(xi, side) {
                    *c += Complex64::new(dr[idx], di[idx]) * m;
                }
            }
        }
        Ok(out)
    }
}

/// `S_φ f = {⟨f, φ_R⟩}` on levels `0..=J+2`, which capture every degree of
/// `V_{4^J}`.
pub fn analyze(sys: &MultiplierSystem, grid: &TileGrid, f: &HermiteExpansion, big_j: usize) -> Result<FrameSequence> {
    check_band_limit(f, big_j)?;
    let engine = FrameEngine::new(grid, sys, big_j + 2)?;
    engine.analyze(sys, f, big_j + 2)
}

fn check_band_limit(f: &HermiteExpansion, big_j: usize) -> Result<()> {
    let cap = 4usize.pow(big_j as u32);
    match f.effective_degree() {
        Some(d) if d > cap => Err(Error::invalid(format!(
            "expansion has degree {d} beyond V_{cap} (J = {big_j})"
        ))),
        _ => Ok(()),
    }
}

/// `T_ψ s = Σ_R s_R ψ_R`, returned in `V_K` with `K` the largest band degree
/// of the sequence's top level.
pub fn synthesize(sys: &MultiplierSystem, grid: &TileGrid, s: &FrameSequence) -> Result<HermiteExpansion> {
    let top = s.max_level();
    let engine = FrameEngine::new(grid, sys, top)?;
    let degree = (0..=top)
        .filter_map(|j| band_degree(sys, j, grid.dim()))
        .max()
        .unwrap_or(0);
    engine.synthesize(sys, s, degree)
}

/// `Σ_{ζ ∈ X_j} τ_ζ f(ζ) g(ζ)`, evaluated in logs so that huge `τ_ζ` meets
/// tiny `f g` without overflow.
pub fn cubature_integrate(
    grid: &TileGrid,
    j: usize,
    f: impl Fn(&[f64]) -> f64 + Sync,
    g: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<f64> {
    let count = grid.tile_count(j);
    if count > crate::tiles::TILE_CAP {
        return Err(Error::Resource {
            what: "cubature nodes",
            needed: count,
            cap: crate::tiles::TILE_CAP,
        });
    }
    let terms: Vec<f64> = (0..count as usize)
        .into_par_iter()
        .map(|i| {
            let t = grid.tile_at(j, i);
            let v = f(&t.node) * g(&t.node);
            if v == 0.0 {
                0.0
            } else {
                v.signum() * (t.log_tau + v.abs().ln()).exp()
            }
        })
        .collect();
    Ok(terms.iter().sum())
}

/// Cubature of `f g` for expansions, using normalized node values throughout.
pub fn cubature_expansions(grid: &TileGrid, j: usize, f: &HermiteExpansion, g: &HermiteExpansion) -> Result<Complex64> {
    let kmax = f.degree().max(g.degree());
    let table = NodeTable::new(grid.level(j), kmax);
    let engine = FrameEngine {
        grid,
        tables: (0..=j).map(|l| (l == j).then(|| table.clone())).collect(),
    };
    let a = engine.level_forward(j, f, |_| 1.0);
    let b = engine.level_forward(j, g, |_| 1.0);
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}

/// Per-axis products `h_k(x_i) g_k(y_i)` convolved over axes: the
/// degree-`k` part of `τ_y^{1/2} P_k(x, y)`.
fn normalized_degree_kernels(level: &Level, kmax: usize, x: &[f64], node: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; kmax + 1];
    acc[0] = 1.0;
    let mut first = true;
    for (&xi, &yi) in x.iter().zip(node) {
        let h = hermite_values(kmax, xi);
        let (g, _) = christoffel_normalized(2 * level.size, kmax, yi);
        let axis: Vec<f64> = h.iter().zip(&g).map(|(a, b)| a * b).collect();
        if first {
            acc = axis;
            first = false;
        } else {
            let mut next = vec![0.0; kmax + 1];
            for (a, &u) in acc.iter().enumerate() {
                for (b, &v) in axis.iter().enumerate().take(kmax + 1 - a) {
                    next[a + b] += u * v;
                }
            }
            acc = next;
        }
    }
    acc
}

/// Needlet value `φ_R(x) = τ_R^{1/2} φ_j(√L)(x, x_R)`.
pub fn needlet_eval(sys: &MultiplierSystem, grid: &TileGrid, id: &TileId, x: &[f64]) -> f64 {
    let n = grid.dim();
    let Some(kmax) = band_degree(sys, id.j, n) else {
        return 0.0;
    };
    let tile = grid.tile(id);
    let kern = normalized_degree_kernels(grid.level(id.j), kmax, x, &tile.node);
    sys.support_index_set(id.j, n)
        .iter()
        .map(|k| sys.at_degree(id.j, k, n) * kern[k])
        .sum()
}

/// Hermite coefficients of the needlet `φ_R`.
pub fn needlet_expansion(sys: &MultiplierSystem, grid: &TileGrid, id: &TileId) -> HermiteExpansion {
    let n = grid.dim();
    let kmax = band_degree(sys, id.j, n).unwrap_or(0);
    let tile = grid.tile(id);
    let deg = 2 * grid.level(id.j).size;
    let g: Vec<Vec<f64>> = tile.node.iter().map(|&y| christoffel_normalized(deg, kmax, y).0).collect();
    let mut out = HermiteExpansion::zero(n, kmax);
    let indices = out.indices().to_vec();
    for (xi, c) in indices.iter().zip(out.coeffs_mut()) {
        let m = sys.at_degree(id.j, xi.iter().sum(), n);
        if m != 0.0 {
            let prod: f64 = xi.iter().zip(&g).map(|(&k, t)| t[k]).product();
            *c = Complex64::new(m * prod, 0.0);
        }
    }
    out
}

/// Sampling-inequality probe for `g ∈ V_{4^j}`.
#[derive(Debug, Clone, Serialize)]
pub struct PlancherelPolyaReport {
    pub j: usize,
    pub p: f64,
    /// `(Σ_R w(R) max_R |g|^p)^{1/p}` with the max over sampled points.
    pub sampled: f64,
    pub norm: f64,
    pub ratio: f64,
}

/// Compares the tile-wise sampled supremum sum to `‖g‖_{L^p_w}`. The per-tile
/// maximum uses `5ⁿ` points in each subdivided cube, an under-estimate of the
/// supremum.
pub fn plancherel_polya_probe(
    grid: &TileGrid,
    j: usize,
    g: &HermiteExpansion,
    p: f64,
    w: &Weight,
    opts: &crate::norms::NormOptions,
) -> Result<PlancherelPolyaReport> {
    check_band_limit(g, j)?;
    if !grid.is_subdivided() {
        return Err(Error::invalid("the sampling probe needs a subdivided grid"));
    }
    if !(p > 0.0) {
        return Err(Error::invalid("p must be positive"));
    }
    let n = grid.dim();
    let tiles = grid.tiles(j)?;
    let offsets = [0.0, 0.25, 0.5, 0.75, 1.0];
    let terms: Vec<Result<f64>> = tiles
        .par_iter()
        .map(|t| {
            let mut best = 0.0f64;
            for (lo, hi) in grid.subcubes(&t.id).expect("subdivided") {
                for s in 0..5usize.pow(n as u32) {
                    let mut r = s;
                    let x: Vec<f64> = (0..n)
                        .map(|a| {
                            let o = offsets[r % 5];
                            r /= 5;
                            lo[a] + o * (hi[a] - lo[a])
                        })
                        .collect();
                    best = best.max(g.evaluate(&x).norm());
                }
            }
            if best == 0.0 {
                return Ok(0.0);
            }
            let lm = w.log_mass_box(&t.lo, &t.hi)?;
            Ok(if p.is_infinite() { best } else { (lm + p * best.ln()).exp() })
        })
        .collect();
    let mut acc = 0.0f64;
    for t in terms {
        let v = t?;
        acc = if p.is_infinite() { acc.max(v) } else { acc + v };
    }
    let sampled = if p.is_infinite() { acc } else { acc.powf(1.0 / p) };
    let norm = crate::norms::weighted_lp_norm(g, p, w, opts)?;
    Ok(PlancherelPolyaReport {
        j,
        p,
        sampled,
        norm,
        ratio: sampled / norm,
    })
}

/// Peetre-type probe: `a*_j(x) / inf_{y ∈ Q(x, c̃2^{−j})} M_s^θ(Σ|a_R| 1_R)(y)`.
#[derive(Debug, Clone, Serialize)]
pub struct PeetreReport {
    pub j: usize,
    pub sigma: f64,
    pub s: f64,
    pub theta: f64,
    pub max_ratio: f64,
    pub argmax: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn peetre_probe(
    grid: &TileGrid,
    j: usize,
    a: &[f64],
    sigma: f64,
    s: f64,
    theta: f64,
    c_tilde: f64,
    samples: &[Vec<f64>],
) -> Result<PeetreReport> {
    let n = grid.dim();
    if !(s > 0.0 && theta >= 0.0) {
        return Err(Error::invalid("need s > 0 and θ ≥ 0"));
    }
    let need = theta / s + (n as f64).max(n as f64 / s);
    if !(sigma > need) {
        return Err(Error::invalid(format!("σ must exceed θ/s + max(n, n/s) = {need}")));
    }
    if a.len() as u128 != grid.tile_count(j) {
        return Err(Error::invalid("one value per level-j tile is required"));
    }
    let lev = grid.level(j);
    let breaks: Vec<f64> = std::iter::once(lev.intervals[0].0)
        .chain(lev.intervals.iter().map(|iv| iv.1))
        .collect();
    let f = GridFunction::new(vec![breaks; n], a.iter().map(|v| v.abs()).collect())?;
    let scale = 2f64.powi(j as i32);
    let top = (2.0 * lev.outer_half()).log2().ceil() as i32 + 1;
    let family = CubeFamily::Lattice {
        min_exp: -(j as i32) - 2,
        max_exp: top,
        subdivisions: 2,
    };
    let nodes: Vec<Vec<f64>> = (0..a.len()).map(|i| grid.tile_at(j, i).node).collect();
    let r = c_tilde / scale * (1.0 - 1e-9);
    let rows: Vec<Result<(f64, Vec<f64>)>> = samples
        .par_iter()
        .map(|x| {
            let left: f64 = nodes
                .iter()
                .zip(a)
                .filter(|(_, v)| **v != 0.0)
                .map(|(y, v)| {
                    let d = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                    v.abs() / (1.0 + scale * d).powf(sigma)
                })
                .sum();
            let mut right = f64::INFINITY;
            for corner in 0..(1usize << n) + 1 {
                let y: Vec<f64> = if corner == 1 << n {
                    x.clone()
                } else {
                    x.iter()
                        .enumerate()
                        .map(|(i, t)| if corner >> i & 1 == 1 { t + r } else { t - r })
                        .collect()
                };
                right = right.min(maximal(&f, s, theta, &y, &family)?);
            }
            Ok((left / right, x.clone()))
        })
        .collect();
    let mut best = (0.0f64, Vec::new());
    for row in rows {
        let (v, x) = row?;
        if v > best.0 || best.1.is_empty() {
            best = (v, x);
        }
    }
    Ok(PeetreReport {
        j,
        sigma,
        s,
        theta,
        max_ratio: best.0,
        argmax: best.1,
    })
}

/// `λ_k` of the highest degree a scale can reach; used for sizing reports.
pub fn top_eigenvalue(sys: &MultiplierSystem, j: usize, n: usize) -> Option<f64> {
    band_degree(sys, j, n).map(|k| eigenvalue(k, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::DEFAULT_DELTA_STAR;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_1d(deg: usize, seed: &mut u64) -> HermiteExpansion {
        HermiteExpansion::from_1d((0..=deg).map(|_| Complex64::new(lcg(seed), lcg(seed))).collect())
    }

    #[test]
    fn cubature_basic() {
        let g = TileGrid::build(1, DEFAULT_DELTA_STAR, 1, false).unwrap();
        let h0 = |x: &[f64]| hermite_values(1, x[0])[0];
        let h1 = |x: &[f64]| hermite_values(1, x[0])[1];
        assert!((cubature_integrate(&g, 0, h0, h0).unwrap() - 1.0).abs() < 1e-12);
        assert!(cubature_integrate(&g, 0, h0, h1).unwrap().abs() < 1e-12);
        // Top degree of exactness at level 1: 4N_1 − 1 = 43.
        let a = HermiteExpansion::basis(&[21]);
        let b = HermiteExpansion::basis(&[21]);
        assert!((cubature_expansions(&g, 1, &a, &b).unwrap().re - 1.0).abs() < 1e-11);
        let c = HermiteExpansion::basis(&[22]);
        assert!(cubature_expansions(&g, 1, &a, &c).unwrap().norm() < 1e-11);
    }

    #[test]
    fn reconstruction_1d() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 4, false).unwrap();
        let phi = MultiplierSystem::partition(0.05).unwrap();
        let psi = phi.dual().unwrap();
        let mut seed = 3;
        let f = random_1d(16, &mut seed);
        let s = analyze(&phi, &grid, &f, 2).unwrap();
        let back = synthesize(&psi, &grid, &s).unwrap();
        assert!(back.l2_distance(&f) < 1e-12 * f.l2_norm());
    }

    #[test]
    fn reconstruction_2d() {
        let grid = TileGrid::build(2, DEFAULT_DELTA_STAR, 3, false).unwrap();
        let phi = MultiplierSystem::partition(0.05).unwrap();
        let psi = phi.dual().unwrap();
        let mut seed = 11;
        let mut f = HermiteExpansion::zero(2, 4);
        let idx = f.indices().to_vec();
        for (xi, c) in idx.iter().zip(f.coeffs_mut()) {
            let _ = xi;
            *c = Complex64::new(lcg(&mut seed), 0.0);
        }
        let s = analyze(&phi, &grid, &f, 1).unwrap();
        let back = synthesize(&psi, &grid, &s).unwrap();
        assert!(back.l2_distance(&f) < 1e-12 * f.l2_norm());
    }

    #[test]
    fn analysis_examples() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 4, false).unwrap();
        let phi = MultiplierSystem::partition(0.05).unwrap();
        let zero = HermiteExpansion::zero(1, 4);
        assert!(analyze(&phi, &grid, &zero, 2).unwrap().is_zero());
        let h0 = HermiteExpansion::basis(&[0]);
        let s = analyze(&phi, &grid, &h0, 2).unwrap();
        for j in 0..=4 {
            if !phi.support_index_set(j, 1).contains(0) {
                assert!(s.level(j).iter().all(|v| v.norm() == 0.0));
            }
        }
        let big = HermiteExpansion::basis(&[17]);
        assert!(analyze(&phi, &grid, &big, 2).is_err());
        // Linearity.
        let mut seed = 5;
        let (f, g) = (random_1d(16, &mut seed), random_1d(16, &mut seed));
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let lhs = analyze(&phi, &grid, &f.linear_combination(a, &g, b), 2).unwrap();
        let rhs = analyze(&phi, &grid, &f, 2)
            .unwrap()
            .linear_combination(a, &analyze(&phi, &grid, &g, 2).unwrap(), b);
        assert!(lhs.max_distance(&rhs) < 1e-13);
    }

    #[test]
    fn analysis_matches_needlet_pairing() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 4, false).unwrap();
        let phi = MultiplierSystem::partition(0.05).unwrap();
        let mut seed = 9;
        let f = random_1d(16, &mut seed);
        let s = analyze(&phi, &grid, &f, 2).unwrap();
        for (j, p) in [(2usize, 40usize), (3, 135), (4, 500)] {
            let id = TileId { j, pos: vec![p] };
            let ne = needlet_expansion(&phi, &grid, &id);
            let pairing: Complex64 = f.iter().map(|(xi, c)| c * ne.coeff(xi).re).sum();
            assert!((pairing - s.get(&grid, &id)).norm() < 1e-13);
            // Point values of the needlet agree with its expansion.
            for x in [-1.0, 0.2, 3.0] {
                let a = needlet_eval(&phi, &grid, &id, &[x]);
                let b = ne.evaluate(&[x]).re;
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn single_coefficient_synthesizes_needlet() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 3, false).unwrap();
        let psi = MultiplierSystem::partition(0.05).unwrap().dual().unwrap();
        let id = TileId { j: 3, pos: vec![100] };
        let mut s = FrameSequence::zeros(&grid, 3).unwrap();
        s.set(&grid, &id, Complex64::new(1.0, 0.0)).unwrap();
        let out = synthesize(&psi, &grid, &s).unwrap();
        assert!(out.l2_distance(&needlet_expansion(&psi, &grid, &id)) < 1e-15);
        let empty = FrameSequence::zeros(&grid, 3).unwrap();
        assert_eq!(synthesize(&psi, &grid, &empty).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn frame_file_round_trip() {
        let grid = TileGrid::build(2, DEFAULT_DELTA_STAR, 1, false).unwrap();
        let mut s = FrameSequence::zeros(&grid, 1).unwrap();
        s.set(&grid, &TileId { j: 1, pos: vec![3, 20] }, Complex64::new(1.5, -2.0)).unwrap();
        s.set(&grid, &TileId { j: 0, pos: vec![0, 9] }, Complex64::new(-0.25, 0.0)).unwrap();
        let back = FrameSequence::from_json_str(&s.to_json_string(&grid).unwrap(), &grid).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"J":1,"entries":[{"j":1,"node":[0,1],"re":1.0,"im":0.0}]}"#;
        assert!(FrameSequence::from_json_str(bad, &grid).is_err());
        let dup = r#"{"J":0,"entries":[{"j":0,"node":[1,1],"re":1.0},{"j":0,"node":[1,1],"re":2.0}]}"#;
        assert!(FrameSequence::from_json_str(dup, &grid).is_err());
    }

    #[test]
    fn peetre_basic() {
        let grid = TileGrid::build(1, DEFAULT_DELTA_STAR, 2, true).unwrap();
        let m = grid.tile_count(2) as usize;
        let mut a = vec![0.0; m];
        a[40] = 3.0;
        let x = grid.tile_at(2, 40).node;
        let r = peetre_probe(&grid, 2, &a, 3.0, 1.0, 0.0, 0.5, &[x.clone()]).unwrap();
        assert!(r.max_ratio.is_finite() && r.max_ratio > 0.0);
        let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let r2 = peetre_probe(&grid, 2, &a2, 3.0, 1.0, 0.0, 0.5, &[x]).unwrap();
        assert!((r.max_ratio - r2.max_ratio).abs() < 1e-13 * r.max_ratio);
        assert!(peetre_probe(&grid, 2, &a, 1.0, 1.0, 0.0, 0.5, &[vec![0.0]]).is_err());
    }
}
