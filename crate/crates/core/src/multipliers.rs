//! Admissible multiplier systems `{φ_j}` on the spectrum of the harmonic
//! oscillator, their duals, and the spectral operators `φ_j(√L)`.
//!
//! The partition system is built from a C^∞ cut `u` with `u = 1` on `[0, 1/2]`
//! and `u = 0` on `[1, ∞)`:
//!
//! ```text
//! φ_0(λ) = u(λ),    φ_j(λ) = u(2^{-j} λ) − u(2^{1-j} λ)   (j ≥ 1)
//! ```
//!
//! so `Σ_j φ_j ≡ 1` by telescoping and `supp φ_j ⊂ [2^{j-2}, 2^j]`. The dual
//! system is `ψ_j = φ_j / G` with `G = Σ_k φ_k²`, giving `Σ_j ψ_j φ_j ≡ 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::HermiteExpansion;
use crate::hermite::{count_up_to, degree_kernels, eigenvalue, DEFAULT_INDEX_CAP};
use crate::jet::Jet;

/// Number of scales whose bands are written to system files.
pub const EXPORTED_BANDS: usize = 16;

const LOWER_EDGE: f64 = 0.594_603_557_501_360_5; // 2^{-3/4}
const UPPER_EDGE: f64 = 1.681_792_830_507_429; // 2^{3/4}
const CERT_SAMPLES: usize = 4096;
const MIN_SHARPNESS: f64 = 1e-3;

/// Shape of the mollifier-based transition `e^{-a/t}` used by the cut `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Exponent scale `a`; larger values give a flatter start and a steeper middle.
    pub sharpness: f64,
}

impl Default for Transition {
    fn default() -> Self {
        Transition { sharpness: 1.0 }
    }
}

/// Smooth cut: 1 on `[0, 1/2]`, 0 on `[1, ∞)`, C^∞ in between.
fn cut(a: f64, lambda: f64) -> f64 {
    let t = 2.0 * lambda - 1.0;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let e = a * (1.0 / (1.0 - t) - 1.0 / t);
        1.0 / (1.0 + e.exp())
    }
}

fn cut_jet(a: f64, lambda: &Jet) -> Jet {
    let k = lambda.order();
    let t = lambda.scale(2.0).offset(-1.0);
    let t0 = t.value();
    if t0 <= 0.0 {
        return Jet::constant(1.0, k);
    }
    if t0 >= 1.0 {
        return Jet::constant(0.0, k);
    }
    let one = Jet::constant(1.0, k);
    let e = ((one.clone() - t.clone()).recip() - t.recip()).scale(a);
    if e.value() > 700.0 {
        return Jet::constant(0.0, k);
    }
    if e.value() < -700.0 {
        return Jet::constant(1.0, k);
    }
    (one.clone() + e.exp()).recip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Partition,
    Dual,
}

/// Certified lower bound `|φ_j| ≥ constant` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundCertificate {
    pub scale: usize,
    pub lo: f64,
    pub hi: f64,
    pub constant: f64,
}

/// A family of per-scale spectral profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSystem {
    kind: SystemKind,
    c_floor: f64,
    requested: Transition,
    sharpness: f64,
    certificates: Vec<LowerBoundCertificate>,
    g_floor: Option<f64>,
}

impl MultiplierSystem {
    /// Partition-of-unity system whose admissibility lower bounds hold with
    /// constant at least `c_floor`.
    pub fn partition(c_floor: f64) -> Result<Self> {
        Self::partition_with(c_floor, Transition::default())
    }

    pub fn partition_with(c_floor: f64, transition: Transition) -> Result<Self> {
        if !(c_floor > 0.0 && c_floor <= 0.05) {
            return Err(Error::invalid(format!(
                "c_floor must lie in (0, 0.05], got {c_floor}"
            )));
        }
        if !(transition.sharpness > 0.0 && transition.sharpness.is_finite()) {
            return Err(Error::invalid("transition sharpness must be positive"));
        }
        let sharpness = calibrate(c_floor, transition.sharpness)?;
        let mut sys = MultiplierSystem {
            kind: SystemKind::Partition,
            c_floor,
            requested: transition,
            sharpness,
            certificates: Vec::new(),
            g_floor: None,
        };
        sys.certificates = sys.certify()?;
        Ok(sys)
    }

    /// Dual system `ψ_j = φ_j / Σ_k φ_k²`.
    pub fn dual(&self) -> Result<Self> {
        if self.kind != SystemKind::Partition {
            return Err(Error::invalid("dual systems are built from partition systems"));
        }
        let mut dual = MultiplierSystem {
            kind: SystemKind::Dual,
            g_floor: None,
            certificates: Vec::new(),
            ..self.clone()
        };
        // G(2λ) = G(λ) for λ ≥ 1, so [0, 4] covers every configuration.
        let g_min = (0..=CERT_SAMPLES * 4)
            .map(|i| self.square_sum(4.0 * i as f64 / (CERT_SAMPLES * 4) as f64))
            .fold(f64::INFINITY, f64::min);
        if !(g_min > 0.0) {
            return Err(Error::Calibration(format!(
                "Σ φ_k² has no positive lower bound on the sample (min {g_min})"
            )));
        }
        dual.g_floor = Some(g_min);
        dual.certificates = dual.certify()?;
        Ok(dual)
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn c_floor(&self) -> f64 {
        self.c_floor
    }

    /// Calibrated transition sharpness actually used by the profiles.
    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    pub fn transition(&self) -> Transition {
        self.requested
    }

    /// True when every `φ_j` with `j ≥ 1` is a dilate of `φ_1`.
    pub fn dilate_generated(&self) -> bool {
        self.kind == SystemKind::Partition
    }

    pub fn certificates(&self) -> &[LowerBoundCertificate] {
        &self.certificates
    }

    /// Certified lower bound of `Σ_k φ_k²` (dual systems only).
    pub fn square_sum_floor(&self) -> Option<f64> {
        self.g_floor
    }

    /// Declared support band `[a_j, b_j]` of the `j`-th profile.
    pub fn band(&self, j: usize) -> (f64, f64) {
        if j == 0 {
            (0.0, 1.0)
        } else {
            (2f64.powi(j as i32 - 2), 2f64.powi(j as i32))
        }
    }

    fn partition_value(&self, j: usize, lambda: f64) -> f64 {
        let a = self.sharpness;
        if j == 0 {
            cut(a, lambda)
        } else {
            let (lo, hi) = self.band(j);
            if lambda <= lo || lambda >= hi {
                return 0.0;
            }
            cut(a, lambda * 2f64.powi(-(j as i32))) - cut(a, lambda * 2f64.powi(1 - j as i32))
        }
    }

    /// Scales whose open support band contains `λ`.
    fn active_scales(&self, lambda: f64) -> Vec<usize> {
        let mut out = Vec::with_capacity(3);
        if lambda < 1.0 {
            out.push(0);
        }
        if lambda > 0.0 {
            let top = lambda.log2().floor() as i64 + 2;
            for j in (top - 2).max(1)..=top.max(1) {
                let (lo, hi) = self.band(j as usize);
                if lambda > lo && lambda < hi {
                    out.push(j as usize);
                }
            }
        }
        out
    }

    fn square_sum(&self, lambda: f64) -> f64 {
        self.active_scales(lambda)
            .into_iter()
            .map(|k| self.partition_value(k, lambda).powi(2))
            .sum()
    }

    /// Profile value `φ_j(λ)` (or `ψ_j(λ)` for a dual system).
    pub fn value(&self, j: usize, lambda: f64) -> f64 {
        let v = self.partition_value(j, lambda);
        match self.kind {
            SystemKind::Partition => v,
            SystemKind::Dual => {
                if v == 0.0 {
                    0.0
                } else {
                    v / self.square_sum(lambda)
                }
            }
        }
    }

    /// Multiplier on the degree-`k` eigenspace: `φ_j(√(2k+n))`.
    pub fn at_degree(&self, j: usize, k: usize, n: usize) -> f64 {
        self.value(j, eigenvalue(k, n).sqrt())
    }

    /// `φ_j(λ), φ_j'(λ), …, φ_j^{(order)}(λ)`.
    pub fn derivatives(&self, j: usize, lambda: f64, order: usize) -> Vec<f64> {
        let x = Jet::variable(lambda, order);
        let a = self.sharpness;
        let part = |k: usize| -> Jet {
            if k == 0 {
                cut_jet(a, &x)
            } else {
                cut_jet(a, &x.scale(2f64.powi(-(k as i32))))
                    - cut_jet(a, &x.scale(2f64.powi(1 - k as i32)))
            }
        };
        let phi = part(j);
        match self.kind {
            SystemKind::Partition => phi.derivatives(),
            SystemKind::Dual => {
                if phi.coefficients().iter().all(|&c| c == 0.0) {
                    return phi.derivatives();
                }
                // Every scale whose closed band meets a neighborhood of λ.
                let top = if lambda > 0.0 {
                    lambda.log2().floor() as i64 + 3
                } else {
                    1
                };
                let mut g = Jet::constant(0.0, order);
                for k in 0..=top.max(1) as usize {
                    let (lo, hi) = self.band(k);
                    if lambda >= lo && lambda <= hi {
                        let p = part(k);
                        g = g + p.clone() * p;
                    }
                }
                (phi / g).derivatives()
            }
        }
    }

    /// Degrees `k` with `√(2k+n)` in the declared band of scale `j`.
    pub fn support_index_set(&self, j: usize, n: usize) -> SupportIndexSet {
        let (a, b) = self.band(j);
        let nf = n as f64;
        let hi = ((b * b - nf) / 2.0).floor();
        let lo = ((a * a - nf) / 2.0).ceil().max(0.0);
        let range = if hi < 0.0 || hi < lo {
            None
        } else {
            Some((lo as usize, hi as usize))
        };
        SupportIndexSet { scale: j, dim: n, range }
    }

    /// Sum of profiles over scales `0..=j_max` at `λ`.
    pub fn partial_sum(&self, j_max: usize, lambda: f64) -> f64 {
        (0..=j_max).map(|j| self.value(j, lambda)).sum()
    }

    fn certify(&self) -> Result<Vec<LowerBoundCertificate>> {
        (0..=3)
            .map(|j| {
                let (lo, hi) = if j == 0 {
                    (0.0, 0.5 * LOWER_EDGE)
                } else {
                    let s = 2f64.powi(j as i32 - 1);
                    (s * LOWER_EDGE, s * UPPER_EDGE)
                };
                let constant = sampled_min(|l| self.value(j, l).abs(), lo, hi);
                if constant < self.c_floor * (1.0 - 1e-12) {
                    return Err(Error::Calibration(format!(
                        "scale {j}: lower bound {constant} below c_floor {}",
                        self.c_floor
                    )));
                }
                Ok(LowerBoundCertificate {
                    scale: j,
                    lo,
                    hi,
                    constant,
                })
            })
            .collect()
    }

    pub fn to_file(&self) -> SystemFile {
        SystemFile {
            kind: self.kind,
            c_floor: self.c_floor,
            bands: (0..EXPORTED_BANDS)
                .map(|j| {
                    let (a, b) = self.band(j);
                    [a, b]
                })
                .collect(),
            transition: Some(self.requested.sharpness),
        }
    }

    pub fn from_file(file: &SystemFile) -> Result<Self> {
        let transition = Transition {
            sharpness: file.transition.unwrap_or(1.0),
        };
        let base = Self::partition_with(file.c_floor, transition)?;
        let sys = match file.kind {
            SystemKind::Partition => base,
            SystemKind::Dual => base.dual()?,
        };
        for (j, band) in file.bands.iter().enumerate() {
            let (a, b) = sys.band(j);
            if band[0] != a || band[1] != b {
                return Err(Error::invalid(format!(
                    "band {j} is [{}, {}] but the system declares [{a}, {b}]",
                    band[0], band[1]
                )));
            }
        }
        Ok(sys)
    }

    pub fn to_json_string(&self) -> Result<String> {
        crate::io::to_json_string(&self.to_file())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

fn sampled_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..=CERT_SAMPLES)
        .map(|i| f(lo + (hi - lo) * i as f64 / CERT_SAMPLES as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Smallest value of `|φ_1|` on `[2^{-3/4}, 2^{3/4}]` for the cut with exponent
/// scale `a`.
fn band_margin(a: f64) -> f64 {
    sampled_min(|l| cut(a, 0.5 * l) - cut(a, l), LOWER_EDGE, UPPER_EDGE)
}

/// Largest sharpness `≤ nominal` whose band margin reaches `c_floor`.
fn calibrate(c_floor: f64, nominal: f64) -> Result<f64> {
    if band_margin(nominal) >= c_floor {
        return Ok(nominal);
    }
    if band_margin(MIN_SHARPNESS) < c_floor {
        return Err(Error::Calibration(format!(
            "no transition reaches lower bound {c_floor}"
        )));
    }
    let (mut lo, mut hi) = (MIN_SHARPNESS, nominal);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if band_margin(mid) >= c_floor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// JSON form: `{"kind", "c_floor", "bands", "transition"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub kind: SystemKind,
    pub c_floor: f64,
    pub bands: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<f64>,
}

/// Degrees `k` for which `φ_j(√(2k+n))` may be nonzero; a contiguous range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportIndexSet {
    pub scale: usize,
    pub dim: usize,
    range: Option<(usize, usize)>,
}

impl SupportIndexSet {
    pub fn is_empty(&self) -> bool {
        self.range.is_none()
    }

    pub fn len(&self) -> usize {
        self.range.map_or(0, |(a, b)| b - a + 1)
    }

    pub fn contains(&self, k: usize) -> bool {
        self.range.is_some_and(|(a, b)| k >= a && k <= b)
    }

    /// Inclusive bounds, if nonempty.
    pub fn bounds(&self) -> Option<(usize, usize)> {
        self.range
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.range.map(|r| r.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let (a, b) = self.range.map_or((1, 0), |r| r);
        a..=b
    }

    pub fn intersect(&self, other: &SupportIndexSet) -> SupportIndexSet {
        let range = match (self.range, other.range) {
            (Some((a, b)), Some((c, d))) if a.max(c) <= b.min(d) => Some((a.max(c), b.min(d))),
            _ => None,
        };
        SupportIndexSet {
            scale: self.scale,
            dim: self.dim,
            range,
        }
    }
}

/// `φ_j(√L) f`: coefficient `c_ξ ↦ φ_j(√(2|ξ|+n)) c_ξ`; exactly zero outside
/// the support index set.
pub fn apply_multiplier(sys: &MultiplierSystem, j: usize, f: &HermiteExpansion) -> HermiteExpansion {
    let n = f.dim();
    let support = sys.support_index_set(j, n);
    let mut out = f.clone();
    for (xi, c) in f.indices().iter().zip(out.coeffs_mut()) {
        let k: usize = xi.iter().sum();
        if support.contains(k) {
            *c *= sys.at_degree(j, k, n);
        } else {
            *c = Default::default();
        }
    }
    out
}

/// Kernel `φ_j(√L)(x, y) = Σ_{k∈I_j} φ_j(√λ_k) P_k(x, y)`.
pub fn multiplier_kernel(sys: &MultiplierSystem, j: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    multiplier_kernel_capped(sys, j, x, y, DEFAULT_INDEX_CAP)
}

pub fn multiplier_kernel_capped(
    sys: &MultiplierSystem,
    j: usize,
    x: &[f64],
    y: &[f64],
    cap: u128,
) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("kernel points must share a positive dimension"));
    }
    let n = x.len();
    let support = sys.support_index_set(j, n);
    let Some((lo, hi)) = support.bounds() else {
        return Ok(0.0);
    };
    let needed = count_up_to(n, hi);
    if needed > cap {
        return Err(Error::Resource {
            what: "multiplier kernel",
            needed,
            cap,
        });
    }
    let p = degree_kernels(hi, x, y);
    Ok((lo..=hi).map(|k| sys.at_degree(j, k, n) * p[k]).sum())
}

/// The kernel section `φ_j(√L)(·, y)` as a Hermite expansion: coefficient
/// `φ_j(√λ_{|μ|}) h_μ(y)`.
pub fn kernel_section(sys: &MultiplierSystem, j: usize, y: &[f64]) -> HermiteExpansion {
    let n = y.len();
    let support = sys.support_index_set(j, n);
    let degree = support.max_degree().unwrap_or(0);
    let mut out = HermiteExpansion::zero(n, degree);
    let tables: Vec<Vec<f64>> = y
        .iter()
        .map(|&t| crate::hermite::hermite_values(degree, t))
        .collect();
    let indices = out.indices().to_vec();
    for (xi, c) in indices.iter().zip(out.coeffs_mut()) {
        let k: usize = xi.iter().sum();
        if support.contains(k) {
            let h: f64 = xi.iter().zip(&tables).map(|(&a, t)| t[a]).product();
            *c = (sys.at_degree(j, k, n) * h).into();
        }
    }
    out
}

/// Cutoff majorant `e_N(x)`: 1 inside `|x|² < N`, `e^{-ϑ|x|²}` outside.
/// Returned in log form.
pub fn log_cutoff(threshold: f64, theta: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 < threshold {
        0.0
    } else {
        -theta * r2
    }
}

/// Result of scanning `|φ_j(√L)(x,y)|` against the localization majorant
/// `2^{jn} (1 + 2^j|x−y|)^{-N} e_{ε4^j}(x) e_{ε4^j}(y)`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelDecayReport {
    pub scale: usize,
    pub decay_order: f64,
    pub epsilon: f64,
    /// Decay rate ϑ of the cutoff majorant used for `fitted_c`.
    pub theta: f64,
    /// Least-squares slope of the far-field log-kernel against `|x|²`.
    pub theta_least_squares: Option<f64>,
    /// Smallest constant making the bound hold at every grid pair.
    pub fitted_c: f64,
    /// Same constant restricted to pairs inside `|x|², |y|² < ε4^j`.
    pub near_field_c: f64,
    /// `fitted_c / near_field_c`; 1 when the far field adds nothing.
    pub max_violation: f64,
    /// `max |K(x,x)| / 2^{jn}` over grid points with `|x| ≤ 2^j`.
    pub diagonal_c: f64,
    pub pairs: usize,
    pub far_pairs: usize,
}

/// Scans the kernel of scale `j` over all pairs of `grid` points.
///
/// The rate ϑ is chosen as the largest value for which the near-field constant
/// also bounds every far-field pair (minimax fit); the plain least-squares
/// slope is reported alongside for reference.
pub fn kernel_decay_diagnostic(
    sys: &MultiplierSystem,
    j: usize,
    decay_order: f64,
    epsilon: f64,
    grid: &[Vec<f64>],
) -> Result<KernelDecayReport> {
    if !(epsilon > 4.0) {
        return Err(Error::invalid(format!("ε must exceed 4, got {epsilon}")));
    }
    if !(decay_order >= 1.0) {
        return Err(Error::invalid("decay order must be at least 1"));
    }
    let n = grid.first().map_or(1, |p| p.len());
    let scale = 2f64.powi(j as i32);
    let threshold = epsilon * scale * scale;
    let log_peak = (j * n) as f64 * std::f64::consts::LN_2;

    struct Pair {
        log_k: f64,
        log_base: f64,
        far: f64,
        diag: Option<f64>,
    }
    let rows: Vec<Vec<Pair>> = grid
        .par_iter()
        .map(|x| {
            grid.iter()
                .map(|y| {
                    let k = multiplier_kernel(sys, j, x, y)?;
                    let dist = x
                        .iter()
                        .zip(y)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let r2x: f64 = x.iter().map(|v| v * v).sum();
                    let r2y: f64 = y.iter().map(|v| v * v).sum();
                    let far = if r2x >= threshold { r2x } else { 0.0 }
                        + if r2y >= threshold { r2y } else { 0.0 };
                    let diag = (x == y && r2x.sqrt() <= scale).then(|| k.abs() / scale.powi(n as i32));
                    Ok(Pair {
                        log_k: k.abs().ln(),
                        log_base: log_peak - decay_order * (1.0 + scale * dist).ln(),
                        far,
                        diag,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<Pair> = rows.into_iter().flatten().collect();

    let near_log_c = pairs
        .iter()
        .filter(|p| p.far == 0.0)
        .map(|p| p.log_k - p.log_base)
        .fold(f64::NEG_INFINITY, f64::max);
    let far: Vec<&Pair> = pairs
        .iter()
        .filter(|p| p.far > 0.0 && p.log_k.is_finite())
        .collect();

    // Largest ϑ with log_k − log_base + ϑ·far ≤ near_log_c for all far pairs.
    let theta = far
        .iter()
        .map(|p| (near_log_c - (p.log_k - p.log_base)) / p.far)
        .fold(f64::INFINITY, f64::min);
    let theta = if theta.is_finite() { theta.max(1e-6) } else { 0.5 };

    let theta_least_squares = if far.len() >= 2 {
        let z: Vec<f64> = far.iter().map(|p| p.log_k - p.log_base).collect();
        let f: Vec<f64> = far.iter().map(|p| p.far).collect();
        let mz = z.iter().sum::<f64>() / z.len() as f64;
        let mf = f.iter().sum::<f64>() / f.len() as f64;
        let cov: f64 = z.iter().zip(&f).map(|(a, b)| (a - mz) * (b - mf)).sum();
        let var: f64 = f.iter().map(|b| (b - mf).powi(2)).sum();
        (var > 0.0).then(|| -cov / var)
    } else {
        None
    };

    let fitted_log_c = pairs
        .iter()
        .map(|p| p.log_k - p.log_base + theta * p.far)
        .fold(f64::NEG_INFINITY, f64::max);
    let diagonal_c = pairs
        .iter()
        .filter_map(|p| p.diag)
        .fold(0.0, f64::max);
    Ok(KernelDecayReport {
        scale: j,
        decay_order,
        epsilon,
        theta,
        theta_least_squares,
        fitted_c: fitted_log_c.exp(),
        near_field_c: near_log_c.exp(),
        max_violation: (fitted_log_c - near_log_c).exp(),
        diagonal_c,
        pairs: pairs.len(),
        far_pairs: far.len(),
    })
}

/// Composition `φ_j(√L) ψ_k(√L)` of two systems.
#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalityReport {
    pub j: usize,
    pub k: usize,
    /// Number of degrees where both multipliers may be nonzero.
    pub shared_degrees: usize,
    /// `max_d |φ_j(√λ_d) ψ_k(√λ_d)|` over shared degrees.
    pub coefficient_max: f64,
    /// `max |composed kernel|` over grid pairs.
    pub kernel_max: f64,
}

pub fn orthogonality_check(
    sys_a: &MultiplierSystem,
    sys_b: &MultiplierSystem,
    j: usize,
    k: usize,
    grid: &[Vec<f64>],
) -> Result<OrthogonalityReport> {
    let n = grid.first().map_or(1, |p| p.len());
    let shared = sys_a
        .support_index_set(j, n)
        .intersect(&sys_b.support_index_set(k, n));
    let composed: Vec<(usize, f64)> = shared
        .iter()
        .map(|d| (d, sys_a.at_degree(j, d, n) * sys_b.at_degree(k, d, n)))
        .collect();
    let coefficient_max = composed.iter().map(|(_, m)| m.abs()).fold(0.0, f64::max);
    let kernel_max = match shared.max_degree() {
        None => 0.0,
        Some(hi) => {
            let needed = count_up_to(n, hi);
            if needed > DEFAULT_INDEX_CAP {
                return Err(Error::Resource {
                    what: "composed kernel",
                    needed,
                    cap: DEFAULT_INDEX_CAP,
                });
            }
            grid.par_iter()
                .map(|x| {
                    grid.iter()
                        .map(|y| {
                            let p = degree_kernels(hi, x, y);
                            composed.iter().map(|&(d, m)| m * p[d]).sum::<f64>().abs()
                        })
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max)
        }
    };
    Ok(OrthogonalityReport {
        j,
        k,
        shared_degrees: shared.len(),
        coefficient_max,
        kernel_max,
    })
}
