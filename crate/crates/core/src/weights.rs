//! Weights, the critical radius `ρ(x) = 1/(1+|x|_∞)`, the class certificate
//! for `A^η_p(L)`, and the discrete maximal operator `M_s^θ`.
//!
//! Masses are computed in the log domain: growing Gaussian weights overflow a
//! double on cubes of moderate size long before the quantities compared in the
//! certificates do.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_2d, Tolerance};

const MASS_TOL: f64 = 1e-12;

/// `|x|_∞`.
pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `ρ(x) = 1 / (1 + |x|_∞)`.
pub fn critical_radius(x: &[f64]) -> f64 {
    1.0 / (1.0 + sup_norm(x))
}

/// `ln(e^a + e^b)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Cube `Q(x, r) = {y : |x − y|_∞ < r}` with sidelength `ℓ(Q) = 2r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub center: Vec<f64>,
    pub half: f64,
}

impl CubeSpec {
    pub fn new(center: Vec<f64>, half: f64) -> Result<Self> {
        if !(half > 0.0 && half.is_finite()) {
            return Err(Error::invalid(format!("cube half-sidelength must be positive, got {half}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("cube center must be a finite nonempty point"));
        }
        Ok(CubeSpec { center, half })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half
    }

    pub fn lo(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.half).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.half).collect()
    }

    pub fn log_volume(&self) -> f64 {
        self.dim() as f64 * self.side().ln()
    }

    /// Closed containment `|x − center|_∞ ≤ half`.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= self.half)
    }
}

/// `Ψ_θ(Q) = (1 + ℓ(Q)/ρ(x_Q))^θ`.
pub fn psi_factor(q: &CubeSpec, theta: f64) -> f64 {
    log_psi_factor(q, theta).exp()
}

pub fn log_psi_factor(q: &CubeSpec, theta: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    theta * (q.side() / critical_radius(&q.center)).ln_1p()
}

/// Weight families with analytic or piecewise-linear profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `w ≡ c`.
    Constant { c: f64 },
    /// `w(x) = |x|^ε` (Euclidean norm).
    Power { epsilon: f64 },
    /// `w(x) = e^{ε|x|²}`.
    Gaussian { epsilon: f64 },
    /// One-dimensional piecewise-linear profile raised to `exponent`,
    /// extended by constants outside the table.
    Table { x: Vec<f64>, w: Vec<f64>, exponent: f64 },
}

/// Declared class membership data; never certified by the library.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Critical integrability index `r_w ≥ 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    family: Family,
    class: ClassInfo,
}

impl Weight {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("constant weight must be positive, got {c}")));
        }
        Ok(Self::from_family(Family::Constant { c }))
    }

    /// `w ≡ 1`.
    pub fn unit() -> Self {
        Self::from_family(Family::Constant { c: 1.0 })
    }

    pub fn power(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::invalid("power exponent must be finite"));
        }
        Ok(Self::from_family(Family::Power { epsilon }))
    }

    pub fn gaussian(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::invalid("gaussian exponent must be finite"));
        }
        Ok(Self::from_family(Family::Gaussian { epsilon }))
    }

    pub fn table(x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != w.len() {
            return Err(Error::invalid("table weights need at least two matching grid values"));
        }
        if x.windows(2).any(|p| !(p[0] < p[1])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table grid must be finite and strictly increasing"));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("table values must be finite and nonnegative"));
        }
        Ok(Self::from_family(Family::Table { x, w, exponent: 1.0 }))
    }

    fn from_family(family: Family) -> Self {
        Weight {
            family,
            class: ClassInfo::default(),
        }
    }

    pub fn with_class(mut self, class: ClassInfo) -> Self {
        self.class = class;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn class(&self) -> &ClassInfo {
        &self.class
    }

    /// Declared `r_w`, defaulting to 1.
    pub fn r_w(&self) -> f64 {
        self.class.r_w.unwrap_or(1.0)
    }

    pub fn label(&self) -> String {
        match &self.family {
            Family::Constant { c } => format!("constant({c})"),
            Family::Power { epsilon } => format!("|x|^{epsilon}"),
            Family::Gaussian { epsilon } => format!("exp({epsilon}|x|^2)"),
            Family::Table { x, exponent, .. } => format!("table[{}]^{exponent}", x.len()),
        }
    }

    /// Checks that the weight can be evaluated in dimension `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match &self.family {
            Family::Table { .. } if n != 1 => Err(Error::Unsupported(
                "table weights are one-dimensional".into(),
            )),
            Family::Power { epsilon } if *epsilon <= -(n as f64) => Err(Error::NonIntegrable(format!(
                "|x|^{epsilon} is not locally integrable in dimension {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// True when the weight is bounded on bounded sets.
    pub fn locally_bounded(&self) -> bool {
        !matches!(self.family, Family::Power { epsilon } if epsilon < 0.0)
            && !matches!(&self.family, Family::Table { exponent, w, .. } if *exponent < 0.0 && w.iter().any(|&v| v == 0.0))
    }

    /// `w^a`.
    pub fn powf(&self, a: f64) -> Weight {
        let family = match &self.family {
            Family::Constant { c } => Family::Constant { c: c.powf(a) },
            Family::Power { epsilon } => Family::Power { epsilon: epsilon * a },
            Family::Gaussian { epsilon } => Family::Gaussian { epsilon: epsilon * a },
            Family::Table { x, w, exponent } => Family::Table {
                x: x.clone(),
                w: w.clone(),
                exponent: exponent * a,
            },
        };
        Weight {
            family,
            class: ClassInfo::default(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.log_value(x).exp()
    }

    pub fn log_value(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Constant { c } => c.ln(),
            Family::Power { epsilon } => {
                if *epsilon == 0.0 {
                    0.0
                } else {
                    0.5 * epsilon * x.iter().map(|v| v * v).sum::<f64>().ln()
                }
            }
            Family::Gaussian { epsilon } => epsilon * x.iter().map(|v| v * v).sum::<f64>(),
            Family::Table { x: grid, w, exponent } => exponent * table_linear(grid, w, x[0]).ln(),
        }
    }

    /// `ln sup_B w` over the closed box.
    pub fn log_sup_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.log_extreme(lo, hi, true)
    }

    /// `ln ess inf_B w` over the box.
    pub fn log_inf_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        self.log_extreme(lo, hi, false)
    }

    fn log_extreme(&self, lo: &[f64], hi: &[f64], sup: bool) -> f64 {
        let near: f64 = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| if a > 0.0 { a * a } else if b < 0.0 { b * b } else { 0.0 })
            .sum();
        let far: f64 = lo.iter().zip(hi).map(|(a, b)| (a * a).max(b * b)).sum();
        match &self.family {
            Family::Constant { c } => c.ln(),
            Family::Gaussian { epsilon } => {
                epsilon * if (*epsilon > 0.0) == sup { far } else { near }
            }
            Family::Power { epsilon } => {
                if *epsilon == 0.0 {
                    0.0
                } else {
                    0.5 * epsilon * if (*epsilon > 0.0) == sup { far } else { near }.ln()
                }
            }
            Family::Table { x, w, exponent } => {
                let mut vals = vec![table_linear(x, w, lo[0]), table_linear(x, w, hi[0])];
                vals.extend(
                    x.iter()
                        .zip(w)
                        .filter(|(&t, _)| t > lo[0] && t < hi[0])
                        .map(|(_, &v)| v),
                );
                let (mn, mx) = vals
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
                let pick = if (*exponent > 0.0) == sup { mx } else { mn };
                exponent * pick.ln()
            }
        }
    }

    /// `ln w(B)` for the box `B = Π [lo_i, hi_i]`.
    pub fn log_mass_box(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::invalid("box bounds must share a positive dimension"));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid("box bounds must be finite and ordered"));
        }
        if lo.iter().zip(hi).any(|(a, b)| a == b) {
            return Ok(f64::NEG_INFINITY);
        }
        let n = lo.len();
        match &self.family {
            Family::Constant { c } => Ok(c.ln() + lo.iter().zip(hi).map(|(a, b)| (b - a).ln()).sum::<f64>()),
            Family::Gaussian { epsilon } => lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| log_gauss_1d(*epsilon, a, b))
                .sum(),
            Family::Power { epsilon } => match n {
                1 => log_power_1d(*epsilon, lo[0], hi[0]),
                2 => log_power_2d(*epsilon, [lo[0], lo[1]], [hi[0], hi[1]]),
                _ => Err(Error::Unsupported(
                    "power weight masses are available for n ≤ 2".into(),
                )),
            },
            Family::Table { x, w, exponent } => {
                self.check_dim(n)?;
                log_table_1d(x, w, *exponent, lo[0], hi[0])
            }
        }
    }

    pub fn mass_box(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        self.log_mass_box(lo, hi).map(f64::exp)
    }

    pub fn log_mass_cube(&self, q: &CubeSpec) -> Result<f64> {
        self.log_mass_box(&q.lo(), &q.hi())
    }

    pub fn mass_cube(&self, q: &CubeSpec) -> Result<f64> {
        self.log_mass_cube(q).map(f64::exp)
    }

    /// `ln w(B(x, r))` for the Euclidean ball; `n ≤ 2`.
    pub fn log_mass_ball(&self, center: &[f64], r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::invalid("ball radius must be positive"));
        }
        if let Family::Constant { c } = self.family {
            return match center.len() {
                1 => Ok(c.ln() + (2.0 * r).ln()),
                2 => Ok(c.ln() + (std::f64::consts::PI * r * r).ln()),
                _ => Err(Error::Unsupported("ball masses are available for n ≤ 2".into())),
            };
        }
        match center.len() {
            1 => self.log_mass_box(&[center[0] - r], &[center[0] + r]),
            2 => self.log_mass_disc(center, r),
            _ => Err(Error::Unsupported("ball masses are available for n ≤ 2".into())),
        }
    }

    pub fn mass_ball(&self, center: &[f64], r: f64) -> Result<f64> {
        self.log_mass_ball(center, r).map(f64::exp)
    }

    fn log_mass_disc(&self, c: &[f64], r: f64) -> Result<f64> {
        if let Family::Power { epsilon } = self.family {
            if epsilon <= -2.0 && c[0] * c[0] + c[1] * c[1] <= r * r {
                return Err(Error::NonIntegrable(format!(
                    "|x|^{epsilon} is not integrable on a disc containing the origin"
                )));
            }
        }
        let lo = [c[0] - r, c[1] - r];
        let hi = [c[0] + r, c[1] + r];
        let scale = self.log_sup_box(&lo, &hi);
        let scale = if scale.is_finite() { scale } else { 0.0 };
        let tol = Tolerance::rel(1e-10);
        let chord = |u: f64| -> f64 {
            let h = (r * r - u * u).max(0.0).sqrt();
            if h == 0.0 {
                return 0.0;
            }
            let x = c[0] + u;
            match &self.family {
                Family::Gaussian { epsilon } => log_gauss_1d(*epsilon, c[1] - h, c[1] + h)
                    .map(|v| (v + epsilon * x * x - scale).exp())
                    .unwrap_or(f64::NAN),
                _ => integrate(
                    |y| (self.log_value(&[x, y]) - scale).exp(),
                    c[1] - h,
                    c[1] + h,
                    &[0.0],
                    tol,
                )
                .unwrap_or(f64::NAN),
            }
        };
        let v = integrate(chord, -r, r, &[-c[0]], tol)?;
        Ok(scale + v.ln())
    }

    pub fn to_file(&self) -> WeightFile {
        let (family, params) = match &self.family {
            Family::Constant { c } => ("constant", serde_json::json!({ "c": c })),
            Family::Power { epsilon } => ("power", serde_json::json!({ "epsilon": epsilon })),
            Family::Gaussian { epsilon } => ("gaussian", serde_json::json!({ "epsilon": epsilon })),
            Family::Table { x, w, exponent } => {
                let masses: Vec<f64> = x
                    .windows(2)
                    .zip(w.windows(2))
                    .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
                    .collect();
                let mut p = serde_json::json!({ "x": x, "w": w, "masses": masses });
                if *exponent != 1.0 {
                    p["exponent"] = serde_json::json!(exponent);
                }
                ("table", p)
            }
        };
        WeightFile {
            family: family.to_string(),
            params,
            class: (self.class != ClassInfo::default()).then(|| self.class.clone()),
        }
    }

    pub fn from_file(file: &WeightFile) -> Result<Self> {
        fn params<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> Result<T> {
            serde_json::from_value(v.clone()).map_err(|e| Error::invalid(format!("weight params: {e}")))
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ConstantParams {
            #[serde(default = "one")]
            c: f64,
        }
        fn one() -> f64 {
            1.0
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct EpsParams {
            epsilon: f64,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TableParams {
            x: Vec<f64>,
            w: Vec<f64>,
            #[serde(default)]
            masses: Option<Vec<f64>>,
            #[serde(default = "one")]
            exponent: f64,
        }
        let empty = serde_json::json!({});
        let p = if file.params.is_null() { &empty } else { &file.params };
        let mut weight = match file.family.as_str() {
            "constant" => Weight::constant(params::<ConstantParams>(p)?.c)?,
            "power" => Weight::power(params::<EpsParams>(p)?.epsilon)?,
            "gaussian" => Weight::gaussian(params::<EpsParams>(p)?.epsilon)?,
            "table" => {
                let t: TableParams = params(p)?;
                let mut w = Weight::table(t.x.clone(), t.w.clone())?;
                if let Some(m) = t.masses {
                    if m.len() + 1 != t.x.len() {
                        return Err(Error::invalid("table masses must have one entry per grid cell"));
                    }
                    for (i, &mi) in m.iter().enumerate() {
                        let want = 0.5 * (t.x[i + 1] - t.x[i]) * (t.w[i] + t.w[i + 1]);
                        if (mi - want).abs() > 1e-12 * want.abs().max(1e-300) {
                            return Err(Error::invalid(format!(
                                "table mass {i} is {mi}, trapezoid gives {want}"
                            )));
                        }
                    }
                }
                if t.exponent != 1.0 {
                    w = w.powf(t.exponent);
                }
                w
            }
            other => return Err(Error::invalid(format!("unknown weight family '{other}'"))),
        };
        if let Some(c) = &file.class {
            if c.r_w.is_some_and(|r| !(r >= 1.0)) {
                return Err(Error::invalid("r_w must be at least 1"));
            }
            weight.class = c.clone();
        }
        Ok(weight)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        crate::io::to_json_string(&self.to_file())
    }
}

/// `{"family": ..., "params": {...}, "class": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassInfo>,
}

fn table_linear(x: &[f64], w: &[f64], t: f64) -> f64 {
    if t <= x[0] {
        return w[0];
    }
    if t >= x[x.len() - 1] {
        return w[w.len() - 1];
    }
    let i = x.partition_point(|&v| v <= t) - 1;
    let s = (t - x[i]) / (x[i + 1] - x[i]);
    w[i] + s * (w[i + 1] - w[i])
}

fn log_table_1d(x: &[f64], w: &[f64], exponent: f64, a: f64, b: f64) -> Result<f64> {
    let mut pts = vec![a];
    pts.extend(x.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    if exponent == 1.0 {
        let m: f64 = pts
            .windows(2)
            .map(|p| 0.5 * (p[1] - p[0]) * (table_linear(x, w, p[0]) + table_linear(x, w, p[1])))
            .sum();
        return Ok(m.ln());
    }
    let mut total = 0.0;
    for p in pts.windows(2) {
        let (va, vb) = (table_linear(x, w, p[0]), table_linear(x, w, p[1]));
        if exponent < 0.0 && (va == 0.0 || vb == 0.0) {
            // Linear profile vanishing at an endpoint: ∫ t^e is finite iff e > −1.
            if exponent <= -1.0 {
                return Err(Error::NonIntegrable(format!(
                    "table weight to the power {exponent} near a zero"
                )));
            }
        }
        let v = if va == vb {
            (p[1] - p[0]) * va.powf(exponent)
        } else {
            // Exact: ∫ (linear)^e = (vb^{e+1} − va^{e+1}) / ((e+1) slope).
            let slope = (vb - va) / (p[1] - p[0]);
            if (exponent + 1.0).abs() < 1e-15 {
                (vb.ln() - va.ln()) / slope
            } else {
                (vb.powf(exponent + 1.0) - va.powf(exponent + 1.0)) / ((exponent + 1.0) * slope)
            }
        };
        total += v;
    }
    Ok(total.ln())
}

/// `ln ∫_a^b e^{εt²} dt`.
pub(crate) fn log_gauss_1d(eps: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Ok(f64::NEG_INFINITY);
    }
    if eps == 0.0 {
        return Ok((b - a).ln());
    }
    if a < 0.0 && b > 0.0 {
        return Ok(log_add(log_gauss_1d(eps, a, 0.0)?, log_gauss_1d(eps, 0.0, b)?));
    }
    if b <= 0.0 {
        return log_gauss_1d(eps, -b, -a);
    }
    let anchor = if eps > 0.0 { b } else { a };
    let tol = Tolerance {
        rel: MASS_TOL,
        abs: 0.0,
        max_panels: crate::quadrature::MAX_PANELS,
    };
    let v = integrate(
        |t| (eps * (t - anchor) * (t + anchor)).exp(),
        a,
        b,
        &[],
        tol,
    )?;
    Ok(eps * anchor * anchor + v.ln())
}

/// `ln ∫_a^b |t|^ε dt`.
fn log_power_1d(eps: f64, a: f64, b: f64) -> Result<f64> {
    if a < 0.0 && b > 0.0 {
        return Ok(log_add(log_power_1d(eps, a, 0.0)?, log_power_1d(eps, 0.0, b)?));
    }
    if b <= 0.0 {
        return log_power_1d(eps, -b, -a);
    }
    let s = eps + 1.0;
    if a == 0.0 {
        if s <= 0.0 {
            return Err(Error::NonIntegrable(format!(
                "|x|^{eps} is not integrable near the origin"
            )));
        }
        return Ok(s * b.ln() - s.ln());
    }
    if s == 0.0 {
        return Ok((b / a).ln().ln());
    }
    Ok(s * b.ln() + (-(s * (a / b).ln()).exp_m1() / s).ln())
}

/// `ln ∫_B |x|^ε` for a rectangle in the plane.
fn log_power_2d(eps: f64, lo: [f64; 2], hi: [f64; 2]) -> Result<f64> {
    let mut acc = f64::NEG_INFINITY;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            // Intersect with the closed quadrant and reflect into the first.
            let clip = |l: f64, h: f64, s: f64| -> Option<(f64, f64)> {
                let (l, h) = if s > 0.0 { (l.max(0.0), h) } else { ((-h).max(0.0), -l) };
                (l < h).then_some((l, h))
            };
            let (Some(x), Some(y)) = (clip(lo[0], hi[0], sx), clip(lo[1], hi[1], sy)) else {
                continue;
            };
            acc = log_add(acc, log_power_quadrant(eps, [x.0, y.0], [x.1, y.1])?);
        }
    }
    Ok(acc)
}

fn log_power_quadrant(eps: f64, lo: [f64; 2], hi: [f64; 2]) -> Result<f64> {
    let tol = Tolerance::rel(MASS_TOL);
    if lo == [0.0, 0.0] {
        if eps <= -2.0 {
            return Err(Error::NonIntegrable(format!(
                "|x|^{eps} is not integrable near the origin in the plane"
            )));
        }
        // Polar coordinates: ∫_0^{R(θ)} r^{ε+1} dr = R(θ)^{ε+2}/(ε+2).
        let e = eps + 2.0;
        let theta0 = hi[1].atan2(hi[0]);
        let lower = integrate(|t: f64| (1.0 / t.cos()).powf(e), 0.0, theta0, &[], tol)?;
        let upper = integrate(|t: f64| (1.0 / t.sin()).powf(e), theta0, FRAC_PI_2, &[], tol)?;
        return Ok(log_add(
            e * hi[0].ln() + lower.ln(),
            e * hi[1].ln() + upper.ln(),
        ) - e.ln());
    }
    let near = lo[0] * lo[0] + lo[1] * lo[1];
    let far = hi[0] * hi[0] + hi[1] * hi[1];
    let scale = 0.5 * eps * if eps > 0.0 { far } else { near }.ln();
    let v = integrate_2d(
        |x, y| (0.5 * eps * (x * x + y * y).ln() - scale).exp(),
        lo,
        hi,
        tol,
    )?;
    Ok(scale + v.ln())
}

/// Cube sampling plan for the class certificate.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingPlan {
    pub dim: usize,
    /// Sidelengths `2^k` for `k ∈ [min_exp, max_exp]`.
    pub min_exp: i32,
    pub max_exp: i32,
    /// Centers satisfy `|x_Q|_∞ ≤ extent`.
    pub extent: f64,
    pub max_centers_per_axis: usize,
}

impl SamplingPlan {
    /// Plan of the given depth: sidelengths `2^{-depth}..2^{depth}` and centers
    /// within `|x|_∞ ≤ 2^depth`.
    pub fn with_depth(dim: usize, depth: u32) -> Self {
        SamplingPlan {
            dim,
            min_exp: -(depth as i32),
            max_exp: depth as i32,
            extent: 2f64.powi(depth as i32),
            max_centers_per_axis: if dim == 1 { 257 } else { 33 },
        }
    }

    pub fn cubes(&self) -> Vec<CubeSpec> {
        let mut out = Vec::new();
        for k in self.min_exp..=self.max_exp {
            let side = 2f64.powi(k);
            let mut spacing = 0.5 * side;
            while 2.0 * (self.extent / spacing).floor() + 1.0 > self.max_centers_per_axis as f64 {
                spacing *= 2.0;
            }
            let m = (self.extent / spacing).floor() as i64;
            let axis: Vec<f64> = (-m..=m).map(|i| i as f64 * spacing).collect();
            for idx in 0..axis.len().pow(self.dim as u32) {
                let mut rem = idx;
                let center: Vec<f64> = (0..self.dim)
                    .map(|_| {
                        let c = axis[rem % axis.len()];
                        rem /= axis.len();
                        c
                    })
                    .collect();
                out.push(CubeSpec {
                    center,
                    half: 0.5 * side,
                });
            }
        }
        out
    }
}

/// Numeric evidence for `w ∈ A^η_p(L)`: the largest sampled value of
/// `(avg_Q w)^{1/p} (avg_Q w^{1−p'})^{1/p'} / Ψ_η(Q)` (or the `p = 1` form).
#[derive(Debug, Clone, Serialize)]
pub struct AhpCertificate {
    pub weight: String,
    pub p: f64,
    pub eta: f64,
    pub cubes: usize,
    pub max_ratio: f64,
    pub argmax: Option<CubeSpec>,
    /// A sampled cube where the dual weight fails to be integrable.
    pub counterexample: Option<CubeSpec>,
    /// `(sidelength, largest ratio at that sidelength)`.
    pub per_side: Vec<(f64, f64)>,
}

impl AhpCertificate {
    pub fn consistent(&self) -> bool {
        self.counterexample.is_none() && self.max_ratio.is_finite()
    }
}

/// Scans the sampled cubes for the class ratio. Non-integrability of
/// `w^{1−p'}` on a cube is reported as a counterexample, not an error.
pub fn ahp_certificate(w: &Weight, p: f64, eta: f64, plan: &SamplingPlan) -> Result<AhpCertificate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must lie in [1, ∞), got {p}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid("η must be nonnegative"));
    }
    w.check_dim(plan.dim)?;
    let cubes = plan.cubes();
    let dual = (p > 1.0).then(|| w.powf(1.0 - p / (p - 1.0)));
    let ratios: Vec<Result<Option<f64>>> = cubes
        .par_iter()
        .map(|q| {
            let (lo, hi) = (q.lo(), q.hi());
            let log_vol = q.log_volume();
            let avg_w = w.log_mass_box(&lo, &hi)? - log_vol;
            let lhs = match &dual {
                Some(d) => {
                    let pp = p / (p - 1.0);
                    match d.log_mass_box(&lo, &hi) {
                        Ok(m) => avg_w / p + (m - log_vol) / pp,
                        Err(Error::NonIntegrable(_)) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                }
                None => {
                    let inf = w.log_inf_box(&lo, &hi);
                    if inf == f64::NEG_INFINITY {
                        return Ok(None);
                    }
                    avg_w - inf
                }
            };
            Ok(Some(lhs - log_psi_factor(q, eta)))
        })
        .collect();
    let mut max_log = f64::NEG_INFINITY;
    let mut argmax = None;
    let mut counterexample = None;
    let mut per_side: Vec<(f64, f64)> = Vec::new();
    for (q, r) in cubes.iter().zip(ratios) {
        let side = q.side();
        let value = match r? {
            Some(v) => v,
            None => {
                if counterexample.is_none() {
                    counterexample = Some(q.clone());
                }
                f64::INFINITY
            }
        };
        if value > max_log {
            max_log = value;
            argmax = Some(q.clone());
        }
        match per_side.last_mut() {
            Some(last) if last.0 == side => last.1 = last.1.max(value),
            _ => per_side.push((side, value)),
        }
    }
    Ok(AhpCertificate {
        weight: w.label(),
        p,
        eta,
        cubes: cubes.len(),
        max_ratio: max_log.exp(),
        argmax,
        counterexample,
        per_side: per_side.into_iter().map(|(s, v)| (s, v.exp())).collect(),
    })
}

/// Fit of the slow-growth inequality `ρ(y) ≤ C ρ(x) (1 + |x−y|/ρ(x))^{κ/(κ+1)}`.
#[derive(Debug, Clone, Serialize)]
pub struct SlowGrowthFit {
    pub kappa: f64,
    pub c: f64,
    /// `(κ, smallest C)` for each tried κ.
    pub table: Vec<(f64, f64)>,
}

pub fn slow_growth_fit(pairs: &[(Vec<f64>, Vec<f64>)]) -> SlowGrowthFit {
    let kappas = [1.0, 2.0, 4.0, 8.0, 16.0];
    let table: Vec<(f64, f64)> = kappas
        .iter()
        .map(|&k| {
            let c = pairs
                .iter()
                .map(|(x, y)| {
                    let (rx, ry) = (critical_radius(x), critical_radius(y));
                    let d = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    ry / (rx * (1.0 + d / rx).powf(k / (k + 1.0)))
                })
                .fold(0.0, f64::max);
            (k, c)
        })
        .collect();
    // Smallest κ whose constant is within 10% of the best tried.
    let best = table.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let (kappa, c) = *table.iter().find(|t| t.1 <= 1.1 * best).unwrap_or(&table[0]);
    SlowGrowthFit { kappa, c, table }
}

/// Piecewise-constant function on a rectilinear grid; zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    breaks: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl GridFunction {
    /// `values` are stored with the first axis varying slowest.
    pub fn new(breaks: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() {
            return Err(Error::invalid("grid functions need at least one axis"));
        }
        let mut cells = 1usize;
        for b in &breaks {
            if b.len() < 2 || b.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::invalid("grid breaks must be strictly increasing"));
            }
            cells *= b.len() - 1;
        }
        if values.len() != cells || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite, one per cell"));
        }
        Ok(GridFunction { breaks, values })
    }

    pub fn dim(&self) -> usize {
        self.breaks.len()
    }

    pub fn breaks(&self) -> &[Vec<f64>] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_count(&self) -> usize {
        self.values.len()
    }

    fn shape(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.len() - 1).collect()
    }

    /// Multi-index of cell `i`.
    pub fn cell_index(&self, mut i: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            idx[a] = i % shape[a];
            i /= shape[a];
        }
        idx
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.shape()).fold(0, |acc, (&i, s)| acc * s + i)
    }

    /// `[lo, hi]` bounds of cell `i`.
    pub fn cell_box(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.cell_index(i);
        let lo = idx.iter().zip(&self.breaks).map(|(&k, b)| b[k]).collect();
        let hi = idx.iter().zip(&self.breaks).map(|(&k, b)| b[k + 1]).collect();
        (lo, hi)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut idx = Vec::with_capacity(x.len());
        for (t, b) in x.iter().zip(&self.breaks) {
            let last = b.len() - 1;
            if *t < b[0] || *t > b[last] {
                return 0.0;
            }
            let k = b.partition_point(|&v| v <= *t).min(last) - 1;
            idx.push(k);
        }
        self.values[self.flat(&idx)]
    }

    /// `∫_B |f|^s` over the box `B`, exact.
    pub fn integral_pow_box(&self, lo: &[f64], hi: &[f64], s: f64) -> f64 {
        let ranges: Vec<Vec<(usize, f64)>> = self
            .breaks
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(b, (&l, &h))| {
                let start = b.partition_point(|&v| v <= l).saturating_sub(1);
                let mut out = Vec::new();
                for k in start..b.len() - 1 {
                    if b[k] >= h {
                        break;
                    }
                    let len = b[k + 1].min(h) - b[k].max(l);
                    if len > 0.0 {
                        out.push((k, len));
                    }
                }
                out
            })
            .collect();
        if ranges.iter().any(|r| r.is_empty()) {
            return 0.0;
        }
        let mut total = 0.0;
        let mut counter = vec![0usize; ranges.len()];
        loop {
            let idx: Vec<usize> = counter.iter().zip(&ranges).map(|(&c, r)| r[c].0).collect();
            let vol: f64 = counter.iter().zip(&ranges).map(|(&c, r)| r[c].1).product();
            let v = self.values[self.flat(&idx)].abs();
            if v > 0.0 {
                total += vol * v.powf(s);
            }
            let mut a = ranges.len();
            loop {
                if a == 0 {
                    return total;
                }
                a -= 1;
                counter[a] += 1;
                if counter[a] < ranges[a].len() {
                    break;
                }
                counter[a] = 0;
            }
        }
    }
}

/// Candidate cubes for the maximal operator.
#[derive(Debug, Clone, PartialEq)]
pub enum CubeFamily {
    /// Cubes `Q(c, 2^k)` with `k ∈ [min_exp, max_exp]` and centers on the
    /// lattice `(2^k/subdivisions) ℤⁿ`.
    Lattice {
        min_exp: i32,
        max_exp: i32,
        subdivisions: u32,
    },
    Explicit(Vec<CubeSpec>),
}

impl CubeFamily {
    /// Members containing `x` (closed containment).
    pub fn candidates(&self, x: &[f64]) -> Vec<CubeSpec> {
        match self {
            CubeFamily::Explicit(list) => list.iter().filter(|q| q.contains(x)).cloned().collect(),
            CubeFamily::Lattice {
                min_exp,
                max_exp,
                subdivisions,
            } => {
                let mut out = Vec::new();
                for k in *min_exp..=*max_exp {
                    let r = 2f64.powi(k);
                    let h = r / (*subdivisions).max(1) as f64;
                    let axes: Vec<Vec<f64>> = x
                        .iter()
                        .map(|&t| {
                            let a = ((t - r) / h).ceil() as i64;
                            let b = ((t + r) / h).floor() as i64;
                            (a..=b).map(|i| i as f64 * h).collect()
                        })
                        .collect();
                    let total: usize = axes.iter().map(Vec::len).product();
                    for mut idx in 0..total {
                        let center: Vec<f64> = axes
                            .iter()
                            .map(|ax| {
                                let c = ax[idx % ax.len()];
                                idx /= ax.len();
                                c
                            })
                            .collect();
                        out.push(CubeSpec { center, half: r });
                    }
                }
                out
            }
        }
    }
}

/// `M_s^θ f(x)` with the supremum restricted to `family`; a lower bound for
/// the supremum over all cubes.
pub fn maximal(f: &GridFunction, s: f64, theta: f64, x: &[f64], family: &CubeFamily) -> Result<f64> {
    if !(s > 0.0) || !(theta >= 0.0) {
        return Err(Error::invalid("maximal operator needs s > 0 and θ ≥ 0"));
    }
    let best = family
        .candidates(x)
        .iter()
        .map(|q| {
            let avg = f.integral_pow_box(&q.lo(), &q.hi(), s) / q.log_volume().exp();
            avg / psi_factor(q, theta)
        })
        .fold(0.0, f64::max);
    Ok(best.powf(1.0 / s))
}

/// Cells over which the `L^p_w` norms of the probe are evaluated: each cell
/// contributes its center value times its weight mass.
#[derive(Debug, Clone)]
pub struct EvalCells {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl EvalCells {
    /// Cells of a rectilinear grid.
    pub fn from_breaks(breaks: &[Vec<f64>], w: &Weight) -> Result<Self> {
        let shape = GridFunction::new(
            breaks.to_vec(),
            vec![0.0; breaks.iter().map(|b| b.len() - 1).product()],
        )?;
        let (points, masses) = (0..shape.cell_count())
            .map(|i| {
                let (lo, hi) = shape.cell_box(i);
                let c = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                w.mass_box(&lo, &hi).map(|m| (c, m))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(EvalCells { points, masses })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeffermanSteinReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn lq(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `‖(Σ_j (M_s^θ f_j)^q)^{1/q}‖_{L^p_w} / ‖(Σ_j |f_j|^q)^{1/q}‖_{L^p_w}` on the
/// evaluation cells.
#[allow(clippy::too_many_arguments)]
pub fn fefferman_stein_probe(
    fs: &[GridFunction],
    p: f64,
    q: f64,
    s: f64,
    theta: f64,
    w: &Weight,
    family: &CubeFamily,
    cells: &EvalCells,
) -> Result<FeffermanSteinReport> {
    if !(p > 0.0 && p.is_finite()) || !(q > 0.0) {
        return Err(Error::invalid("need 0 < p < ∞ and q > 0"));
    }
    let bound = (p / w.r_w()).min(q);
    if !(s > 0.0 && s < bound) {
        return Err(Error::invalid(format!(
            "need 0 < s < min(p/r_w, q) = {bound}, got s = {s}"
        )));
    }
    let rows: Vec<(f64, f64)> = cells
        .points
        .par_iter()
        .map(|x| {
            let m: Vec<f64> = fs
                .iter()
                .map(|f| maximal(f, s, theta, x, family))
                .collect::<Result<_>>()?;
            let lhs = lq(m.into_iter(), q);
            let rhs = lq(fs.iter().map(|f| f.value(x).abs()), q);
            Ok((lhs, rhs))
        })
        .collect::<Result<_>>()?;
    let (mut l, mut r) = (0.0, 0.0);
    for ((a, b), m) in rows.iter().zip(&cells.masses) {
        l += m * a.powf(p);
        r += m * b.powf(p);
    }
    let (lhs, rhs) = (l.powf(1.0 / p), r.powf(1.0 / p));
    Ok(FeffermanSteinReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}
