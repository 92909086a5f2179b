//! Finite Hermite expansions `f = Σ_{|ξ|≤N} c_ξ h_ξ` and their JSON form.

use std::cmp::Ordering;
use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::hermite_values;

/// A multi-index `ξ ∈ ℕ₀ⁿ`.
pub type MultiIndex = Vec<usize>;

/// All multi-indices of dimension `n` and total degree exactly `k`, in
/// lexicographic order.
pub fn indices_of_degree(n: usize, k: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if n == 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=k {
            prefix.push(first);
            rec(n - 1, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Graded ordering: total degree first, then lexicographic.
fn graded_cmp(a: &[usize], b: &[usize]) -> Ordering {
    let (sa, sb): (usize, usize) = (a.iter().sum(), b.iter().sum());
    sa.cmp(&sb).then_with(|| a.cmp(b))
}

/// A finite Hermite expansion in `V_N`, stored densely over all multi-indices
/// with `|ξ| ≤ N` in graded order.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion {
    dim: usize,
    degree: usize,
    indices: Vec<MultiIndex>,
    coeffs: Vec<Complex64>,
}

impl HermiteExpansion {
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let indices: Vec<MultiIndex> = (0..=degree)
            .flat_map(|k| indices_of_degree(dim, k))
            .collect();
        let coeffs = vec![Complex64::new(0.0, 0.0); indices.len()];
        HermiteExpansion {
            dim,
            degree,
            indices,
            coeffs,
        }
    }

    /// One-dimensional expansion from coefficients `c_0, …, c_N`.
    pub fn from_1d(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "need at least one coefficient");
        let degree = coeffs.len() - 1;
        HermiteExpansion {
            dim: 1,
            degree,
            indices: (0..=degree).map(|k| vec![k]).collect(),
            coeffs,
        }
    }

    /// One-dimensional expansion with real coefficients.
    pub fn from_real_1d(coeffs: &[f64]) -> Self {
        Self::from_1d(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// The basis function `h_ξ` as an element of `V_{|ξ|}`.
    pub fn basis(xi: &[usize]) -> Self {
        let degree = xi.iter().sum();
        let mut f = Self::zero(xi.len(), degree);
        f.set(xi, Complex64::new(1.0, 0.0)).unwrap();
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maximal total degree `N` of the ambient space `V_N`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// `(ξ, c_ξ)` pairs in graded order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.indices.iter().zip(&self.coeffs)
    }

    fn position(&self, xi: &[usize]) -> Option<usize> {
        if xi.len() != self.dim || xi.iter().sum::<usize>() > self.degree {
            return None;
        }
        if self.dim == 1 {
            return Some(xi[0]);
        }
        self.indices
            .binary_search_by(|probe| graded_cmp(probe, xi))
            .ok()
    }

    /// Coefficient `c_ξ`; zero for indices beyond the stored degree.
    pub fn coeff(&self, xi: &[usize]) -> Complex64 {
        self.position(xi)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn set(&mut self, xi: &[usize], value: Complex64) -> Result<()> {
        let pos = self.position(xi).ok_or_else(|| {
            Error::invalid(format!(
                "multi-index {xi:?} is not in V_{} of dimension {}",
                self.degree, self.dim
            ))
        })?;
        self.coeffs[pos] = value;
        Ok(())
    }

    /// Largest total degree carrying a nonzero coefficient.
    pub fn effective_degree(&self) -> Option<usize> {
        self.iter()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(xi, _)| xi.iter().sum())
            .max()
    }

    /// Same function viewed in `V_degree`; fails if nonzero coefficients would
    /// be dropped.
    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        if let Some(d) = self.effective_degree() {
            if d > degree {
                return Err(Error::invalid(format!(
                    "expansion has nonzero coefficients of degree {d} > {degree}"
                )));
            }
        }
        let mut out = Self::zero(self.dim, degree);
        for (xi, c) in self.iter() {
            if xi.iter().sum::<usize>() <= degree {
                out.set(xi, *c)?;
            }
        }
        Ok(out)
    }

    /// Coefficient-space `ℓ²` norm, which is also the `L²(ℝⁿ)` norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `ℓ²` distance to another expansion of the same dimension.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d = self.degree.max(other.degree);
        let a = self.with_degree(d).expect("raising the degree never truncates");
        let b = other.with_degree(d).expect("raising the degree never truncates");
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `a·self + b·other`, in the larger of the two spaces.
    pub fn linear_combination(&self, a: Complex64, other: &Self, b: Complex64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let d = self.degree.max(other.degree);
        let mut out = self.with_degree(d).expect("raising the degree never truncates");
        let o = other.with_degree(d).expect("raising the degree never truncates");
        out.coeffs
            .iter_mut()
            .zip(&o.coeffs)
            .for_each(|(x, y)| *x = a * *x + b * y);
        out
    }

    /// Evaluates `Σ c_ξ m(|ξ|) h_ξ(x)` for a per-degree multiplier `m`.
    pub fn evaluate_with(&self, x: &[f64], multiplier: impl Fn(usize) -> f64) -> Complex64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let tables: Vec<Vec<f64>> = x.iter().map(|&t| hermite_values(self.degree, t)).collect();
        let mut sum = Complex64::new(0.0, 0.0);
        for (xi, c) in self.iter() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let m = multiplier(xi.iter().sum());
            if m == 0.0 {
                continue;
            }
            let h: f64 = xi.iter().zip(&tables).map(|(&k, tab)| tab[k]).product();
            sum += c * (m * h);
        }
        sum
    }

    /// Point value `f(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        self.evaluate_with(x, |_| 1.0)
    }

    pub fn to_json_string(&self) -> Result<String> {
        crate::io::to_json_string(&ExpansionFile::from(self))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ExpansionFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk form: `{"n", "N", "coeffs": [{"xi", "re", "im"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub degree: usize,
    pub coeffs: Vec<CoeffEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffEntry {
    pub xi: Vec<usize>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<&HermiteExpansion> for ExpansionFile {
    fn from(f: &HermiteExpansion) -> Self {
        ExpansionFile {
            n: f.dim,
            degree: f.degree,
            coeffs: f
                .iter()
                .filter(|(_, c)| c.norm_sqr() > 0.0)
                .map(|(xi, c)| CoeffEntry {
                    xi: xi.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TryFrom<ExpansionFile> for HermiteExpansion {
    type Error = Error;

    fn try_from(file: ExpansionFile) -> Result<Self> {
        if file.n == 0 {
            return Err(Error::invalid("expansion dimension must be positive"));
        }
        let mut out = HermiteExpansion::zero(file.n, file.degree);
        let mut seen = HashSet::new();
        for entry in file.coeffs {
            if entry.xi.len() != file.n {
                return Err(Error::invalid(format!(
                    "index {:?} has length {} but n = {}",
                    entry.xi,
                    entry.xi.len(),
                    file.n
                )));
            }
            if !entry.re.is_finite() || !entry.im.is_finite() {
                return Err(Error::invalid(format!(
                    "coefficient at {:?} is not finite",
                    entry.xi
                )));
            }
            if !seen.insert(entry.xi.clone()) {
                return Err(Error::invalid(format!("duplicate index {:?}", entry.xi)));
            }
            out.set(&entry.xi, Complex64::new(entry.re, entry.im))?;
        }
        Ok(out)
    }
}
