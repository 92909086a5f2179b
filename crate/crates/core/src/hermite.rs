//! Orthonormal Hermite functions, projector kernels, Christoffel functions and
//! zeros of the Hermite polynomials.
//!
//! Every evaluation runs the normalized three-term recurrence directly on the
//! Hermite functions
//!
//! ```text
//! h_0(t)     = π^{-1/4} e^{-t²/2}
//! h_{k+1}(t) = t √(2/(k+1)) h_k(t) − √(k/(k+1)) h_{k-1}(t)
//! ```
//!
//! with the Gaussian factor and a binary exponent carried separately from the
//! mantissa. This keeps the recurrence finite far outside the oscillatory
//! region (where `e^{-t²/2}` alone underflows) and lets Christoffel weights be
//! formed as ratios without ever materializing `e^{t²}`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Default cap on the number of multi-indices a kernel sum may touch.
pub const DEFAULT_INDEX_CAP: u128 = 1_000_000;

const RESCALE_THRESHOLD: f64 = 1e150;
const RESCALE_EXP: i32 = 498; // 2^-498 ≈ 1e-150
const MAX_ZERO_ITERATIONS: usize = 200;

/// Eigenvalue `2k + n` of the harmonic oscillator on the degree-`k` eigenspace.
pub fn eigenvalue(k: usize, n: usize) -> f64 {
    (2 * k + n) as f64
}

/// Mantissa/exponent form of `h_0(t), …, h_{k_max}(t)`:
/// `h_k = mant[k] · 2^{exp2[k]} · e^{gauss}`.
#[derive(Debug, Clone)]
pub(crate) struct ScaledRun {
    pub mant: Vec<f64>,
    pub exp2: Vec<i32>,
    pub gauss: f64,
}

impl ScaledRun {
    pub fn new(k_max: usize, t: f64) -> Self {
        let mut mant = Vec::with_capacity(k_max + 1);
        let mut exp2 = Vec::with_capacity(k_max + 1);
        let mut e = 0i32;
        let mut prev = 0.0f64;
        let mut cur = PI.powf(-0.25);
        mant.push(cur);
        exp2.push(0);
        for k in 0..k_max {
            let kf = k as f64;
            let next = t * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
            if cur.abs() > RESCALE_THRESHOLD {
                let s = 2f64.powi(-RESCALE_EXP);
                cur *= s;
                prev *= s;
                e += RESCALE_EXP;
            }
            mant.push(cur);
            exp2.push(e);
        }
        ScaledRun {
            mant,
            exp2,
            gauss: -0.5 * t * t,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        let m = self.mant[k];
        if m == 0.0 {
            return 0.0;
        }
        let e = self.exp2[k];
        if e == 0 && self.gauss > -700.0 {
            return m * self.gauss.exp();
        }
        let log_abs = m.abs().ln() + e as f64 * LN_2 + self.gauss;
        m.signum() * log_abs.exp()
    }

    /// `ln Σ_{k ≤ upto} h_k²`, robust to under- and overflow.
    pub fn log_sum_squares(&self, upto: usize) -> f64 {
        let top = self.exp2[upto];
        let s = self.relative_sum_squares(upto, top);
        s.ln() + 2.0 * (top as f64 * LN_2 + self.gauss)
    }

    /// `Σ_{k≤upto} mant_k² 4^{exp_k − top}`.
    fn relative_sum_squares(&self, upto: usize, top: i32) -> f64 {
        self.mant[..=upto]
            .iter()
            .zip(&self.exp2[..=upto])
            .map(|(m, &e)| {
                let d = e - top;
                if d < -540 {
                    0.0
                } else {
                    let v = m * 2f64.powi(d);
                    v * v
                }
            })
            .sum()
    }
}

/// Values `h_0(t), …, h_{k_max}(t)` of the orthonormal Hermite functions.
///
/// Values whose magnitude falls below the smallest positive double underflow to
/// zero.
pub fn hermite_values(k_max: usize, t: f64) -> Vec<f64> {
    let run = ScaledRun::new(k_max, t);
    (0..=k_max).map(|k| run.value(k)).collect()
}

/// Single value `h_k(t)`.
pub fn hermite_value(k: usize, t: f64) -> f64 {
    ScaledRun::new(k, t).value(k)
}

/// Tensor-product Hermite function `h_ξ(x) = ∏ h_{ξ_i}(x_i)`.
pub fn hermite_nd(xi: &[usize], x: &[f64]) -> Result<f64> {
    if xi.len() != x.len() {
        return Err(Error::invalid(format!(
            "multi-index has {} entries but point has {}",
            xi.len(),
            x.len()
        )));
    }
    Ok(xi
        .iter()
        .zip(x)
        .map(|(&k, &t)| hermite_value(k, t))
        .product())
}

/// Number of multi-indices in `ℕ₀ⁿ` of total degree exactly `k`.
pub fn count_of_degree(n: usize, k: usize) -> u128 {
    binomial((k + n - 1) as u128, (n - 1) as u128)
}

/// Number of multi-indices in `ℕ₀ⁿ` of total degree at most `k`.
pub fn count_up_to(n: usize, k: usize) -> u128 {
    binomial((k + n) as u128, n as u128)
}

fn binomial(a: u128, b: u128) -> u128 {
    let b = b.min(a - b);
    let mut r: u128 = 1;
    for i in 0..b {
        r = r.saturating_mul(a - i) / (i + 1);
    }
    r
}

fn check_cap(n: usize, k: usize, cap: u128, cumulative: bool) -> Result<()> {
    let needed = if cumulative {
        count_up_to(n, k)
    } else {
        count_of_degree(n, k)
    };
    if needed > cap {
        return Err(Error::Resource {
            what: "multi-index enumeration",
            needed,
            cap,
        });
    }
    Ok(())
}

fn check_points(x: &[f64], y: &[f64]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel points must share a positive dimension (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    Ok(x.len())
}

/// Per-degree kernel sums `P_k(x, y)` for `k = 0..=k_max`, obtained by convolving
/// the one-dimensional products `h_a(x_i) h_a(y_i)` across the axes.
pub(crate) fn degree_kernels(k_max: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut acc: Option<Vec<f64>> = None;
    for (&xi, &yi) in x.iter().zip(y) {
        let hx = hermite_values(k_max, xi);
        let hy = if xi == yi {
            hx.clone()
        } else {
            hermite_values(k_max, yi)
        };
        let axis: Vec<f64> = hx.iter().zip(&hy).map(|(a, b)| a * b).collect();
        acc = Some(match acc {
            None => axis,
            Some(prev) => {
                let mut out = vec![0.0; k_max + 1];
                for (s, o) in out.iter_mut().enumerate() {
                    *o = (0..=s).map(|a| prev[a] * axis[s - a]).sum();
                }
                out
            }
        });
    }
    acc.unwrap_or_default()
}

/// Kernel of the orthogonal projection onto the degree-`k` eigenspace,
/// `P_k(x,y) = Σ_{|ξ|=k} h_ξ(x) h_ξ(y)`.
pub fn projector_kernel(k: usize, x: &[f64], y: &[f64], cap: u128) -> Result<f64> {
    let n = check_points(x, y)?;
    check_cap(n, k, cap, false)?;
    Ok(degree_kernels(k, x, y)[k])
}

/// Kernel `Q_N(x,y) = Σ_{k≤N} P_k(x,y)` of the projection onto `V_N`.
pub fn partial_kernel(degree: usize, x: &[f64], y: &[f64], cap: u128) -> Result<f64> {
    let n = check_points(x, y)?;
    check_cap(n, degree, cap, true)?;
    if n == 1 && x[0] == y[0] {
        return Ok(ScaledRun::new(degree, x[0])
            .log_sum_squares(degree)
            .exp());
    }
    Ok(degree_kernels(degree, x, y).iter().sum())
}

/// One-dimensional Christoffel function `τ(N, x) = 1 / Q_N(x, x)`.
pub fn christoffel(degree: usize, x: f64) -> f64 {
    log_christoffel(degree, x).exp()
}

/// `ln τ(N, x)`; finite even where `τ` itself overflows.
pub fn log_christoffel(degree: usize, x: f64) -> f64 {
    -ScaledRun::new(degree, x).log_sum_squares(degree)
}

/// Christoffel-normalized Hermite values at a point: `g_k = τ(N,t)^{1/2} h_k(t)`
/// for `k ≤ k_max`, together with `ln τ(N,t)`.
///
/// Since `τ(N,t)^{-1} ≥ h_k(t)²` for every `k ≤ N`, the values with `k ≤ N`
/// lie in `[-1, 1]`, which makes them the natural building block for cubature
/// sums. `k_max` may exceed `N`.
pub fn christoffel_normalized(degree: usize, k_max: usize, t: f64) -> (Vec<f64>, f64) {
    let run = ScaledRun::new(degree.max(k_max), t);
    let top = run.exp2[degree];
    let rel = run.relative_sum_squares(degree, top);
    let inv_root = 1.0 / rel.sqrt();
    let g = (0..=k_max)
        .map(|k| {
            let d = run.exp2[k] - top;
            if d < -1070 {
                0.0
            } else {
                run.mant[k] * 2f64.powi(d) * inv_root
            }
        })
        .collect();
    let log_tau = -(rel.ln() + 2.0 * (top as f64 * LN_2 + run.gauss));
    (g, log_tau)
}

/// The `m` real zeros of `H_m`, sorted increasingly and exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSet {
    order: usize,
    zeros: Vec<f64>,
}

impl ZeroSet {
    pub fn order(&self) -> usize {
        self.order
    }

    /// All zeros in increasing order.
    pub fn as_slice(&self) -> &[f64] {
        &self.zeros
    }

    /// Positive zeros `ζ_1 < … < ζ_{m/2}`.
    pub fn positive(&self) -> &[f64] {
        &self.zeros[self.order - self.order / 2..]
    }

    /// `ζ_ν` for `ν ∈ {±1, …, ±m/2}`.
    pub fn zeta(&self, nu: i64) -> f64 {
        let half = (self.order / 2) as i64;
        assert!(
            nu != 0 && nu.abs() <= half,
            "zero index {nu} outside ±1..±{half}"
        );
        let v = self.positive()[(nu.unsigned_abs() - 1) as usize];
        if nu < 0 {
            -v
        } else {
            v
        }
    }
}

/// Zeros of the even-order Hermite polynomial `H_m`.
pub fn hermite_zeros(m: usize) -> Result<ZeroSet> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!(
            "zero sets are defined for even orders m ≥ 2, got {m}"
        )));
    }
    hermite_zeros_any(m)
}

/// Zeros of `H_m` for any `m ≥ 1`.
///
/// Brackets come from a scan of `[0, √(2m+1)]` with step `π / (2√(2m+1))`:
/// Sturm comparison of `h'' + (2m+1−t²)h = 0` with `y'' + (2m+1)y = 0`
/// separates consecutive zeros by more than `π/√(2m+1)`, so each cell of the
/// scan holds at most one zero and every zero is seen as a sign change. Each
/// bracket is then refined with Newton steps that fall back to bisection when
/// they leave the bracket.
pub fn hermite_zeros_any(m: usize) -> Result<ZeroSet> {
    if m == 0 {
        return Err(Error::invalid("H_0 has no zeros"));
    }
    let wanted = m / 2;
    let turning = ((2 * m + 1) as f64).sqrt();
    let step = PI / (2.0 * turning);
    let cells = (turning / step).ceil() as usize + 1;

    let mut positive = Vec::with_capacity(wanted);
    // For odd m, t = 0 is a root; start the scan just past it.
    let mut a = if m % 2 == 1 { 0.5 * step } else { 0.0 };
    let mut fa = sign_value(m, a);
    for _ in 0..cells {
        if positive.len() == wanted {
            break;
        }
        let b = a + step;
        let fb = sign_value(m, b);
        if fb == 0.0 {
            positive.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            positive.push(refine_zero(m, a, b, fa)?);
        }
        a = b;
        fa = fb;
    }
    if positive.len() != wanted {
        return Err(Error::Convergence {
            what: format!(
                "found {} of {} positive zeros of H_{m}",
                positive.len(),
                wanted
            ),
            lo: 0.0,
            hi: a,
        });
    }
    let mut zeros: Vec<f64> = positive.iter().rev().map(|z| -z).collect();
    if m % 2 == 1 {
        zeros.push(0.0);
    }
    zeros.extend_from_slice(&positive);
    Ok(ZeroSet { order: m, zeros })
}

/// `(h_m, h_{m-1})` at `t` sharing one scale factor; only ratios and signs
/// are meaningful.
fn scaled_pair(m: usize, t: f64) -> (f64, f64) {
    let mut prev = 0.0f64;
    let mut cur = 1.0f64;
    for k in 0..m {
        let kf = k as f64;
        let next = t * (2.0 / (kf + 1.0)).sqrt() * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_THRESHOLD {
            let s = 2f64.powi(-RESCALE_EXP);
            cur *= s;
            prev *= s;
        }
    }
    (cur, prev)
}

fn sign_value(m: usize, t: f64) -> f64 {
    scaled_pair(m, t).0
}

fn refine_zero(m: usize, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64> {
    let s_lo = f_lo.signum();
    let mut t = 0.5 * (lo + hi);
    let root2m = (2.0 * m as f64).sqrt();
    for _ in 0..MAX_ZERO_ITERATIONS {
        let (h, hm1) = scaled_pair(m, t);
        if h == 0.0 {
            return Ok(t);
        }
        if h.signum() == s_lo {
            lo = t;
        } else {
            hi = t;
        }
        // h_m' = −t h_m + √(2m) h_{m−1}; the common scale cancels in the ratio.
        let dh = -t * h + root2m * hm1;
        let newton = t - h / dh;
        let next = if dh != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300);
        t = next;
        if converged || hi - lo <= 2.0 * f64::EPSILON * t.abs() {
            return Ok(t);
        }
    }
    Err(Error::Convergence {
        what: format!("zero of H_{m} did not converge"),
        lo,
        hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(eigenvalue(0, 1), 1.0);
        assert_eq!(eigenvalue(3, 2), 8.0);
        assert_eq!(eigenvalue(1_000_000, 1), 2_000_001.0);
    }

    #[test]
    fn low_order_values() {
        let h = hermite_values(0, 0.0);
        assert!((h[0] - 0.751_125_544_4).abs() < 1e-10);
        let h = hermite_values(1, 0.0);
        assert!((h[0] - PI.powf(-0.25)).abs() < 1e-16);
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn values_far_out_stay_finite() {
        // h_0 underflows at t = 60 but high degrees are representable.
        let h = hermite_values(4000, 60.0);
        assert_eq!(h[0], 0.0);
        assert!(h.iter().all(|v| v.is_finite()));
        assert!(h[4000].abs() > 0.0);
    }

    #[test]
    fn nd_products() {
        let v = hermite_nd(&[0, 0], &[0.0, 0.0]).unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(hermite_nd(&[1, 0], &[0.0, 5.0]).unwrap(), 0.0);
        let v = hermite_nd(&[2, 3], &[0.4, -0.7]).unwrap();
        let want = hermite_value(2, 0.4) * hermite_value(3, -0.7);
        assert!((v - want).abs() < 1e-12 * want.abs());
        assert!(hermite_nd(&[1], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn projector_examples() {
        let p = projector_kernel(0, &[0.0], &[0.0], DEFAULT_INDEX_CAP).unwrap();
        assert!((p - 1.0 / PI.sqrt()).abs() < 1e-15);

        let (x, y) = ([0.3, -1.1], [0.8, 0.25]);
        let p = projector_kernel(1, &x, &y, DEFAULT_INDEX_CAP).unwrap();
        let want = hermite_nd(&[1, 0], &x).unwrap() * hermite_nd(&[1, 0], &y).unwrap()
            + hermite_nd(&[0, 1], &x).unwrap() * hermite_nd(&[0, 1], &y).unwrap();
        assert!((p - want).abs() < 1e-15);

        let p = projector_kernel(5, &[0.3], &[-0.2], DEFAULT_INDEX_CAP).unwrap();
        let want = hermite_value(5, 0.3) * hermite_value(5, -0.2);
        assert!((p - want).abs() < 1e-12 * want.abs().max(1e-300));
    }

    #[test]
    fn projector_cap_is_enforced() {
        let err = projector_kernel(2000, &[0.0, 0.0], &[0.0, 0.0], 100).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn partial_kernel_examples() {
        let q = partial_kernel(0, &[0.0], &[0.0], DEFAULT_INDEX_CAP).unwrap();
        assert!((q - 1.0 / PI.sqrt()).abs() < 1e-15);
        let direct: f64 = hermite_values(40, 0.0).iter().map(|v| v * v).sum();
        let q = partial_kernel(40, &[0.0], &[0.0], DEFAULT_INDEX_CAP).unwrap();
        assert!((q - direct).abs() < 1e-12 * direct);
        let off = partial_kernel(7, &[0.4], &[-1.2], DEFAULT_INDEX_CAP).unwrap();
        let want: f64 = hermite_values(7, 0.4)
            .iter()
            .zip(hermite_values(7, -1.2))
            .map(|(a, b)| a * b)
            .sum();
        assert!((off - want).abs() < 1e-14);
    }

    #[test]
    fn partial_kernel_diagonal_nondecreasing() {
        for &x in &[0.0, 0.7, 2.5, 6.0] {
            let mut last = 0.0;
            for n in 0..60 {
                let q = partial_kernel(n, &[x], &[x], DEFAULT_INDEX_CAP).unwrap();
                assert!(q > 0.0 && q >= last);
                last = q;
            }
        }
    }

    #[test]
    fn christoffel_examples() {
        let c0 = christoffel(0, 0.0);
        assert!((c0 - PI.sqrt()).abs() < 1e-14, "{c0}");
        for &x in &[0.5f64, -1.5, 3.0] {
            let want = PI.sqrt() * (x * x).exp();
            assert!((christoffel(0, x) - want).abs() < 1e-13 * want);
        }
        let q: f64 = hermite_values(9, 1.0).iter().map(|v| v * v).sum();
        assert!((christoffel(9, 1.0) - 1.0 / q).abs() < 1e-12 / q);
    }

    #[test]
    fn normalized_values_agree_with_direct_product() {
        let (g, log_tau) = christoffel_normalized(20, 10, 1.7);
        let tau = christoffel(20, 1.7);
        assert!((log_tau - tau.ln()).abs() < 1e-13);
        let h = hermite_values(10, 1.7);
        for k in 0..=10 {
            assert!((g[k] - tau.sqrt() * h[k]).abs() < 1e-14);
        }
        // Far out τ overflows but the normalized values remain bounded.
        let (g, log_tau) = christoffel_normalized(200, 50, 60.0);
        assert!(log_tau > 709.0);
        assert!(g.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn small_zero_sets() {
        let z = hermite_zeros(2).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((z.zeta(1) - r).abs() < 1e-15);
        assert_eq!(z.zeta(-1), -z.zeta(1));

        let z = hermite_zeros(4).unwrap();
        let inner = ((3.0 - 6f64.sqrt()) / 2.0).sqrt();
        let outer = ((3.0 + 6f64.sqrt()) / 2.0).sqrt();
        assert!((z.zeta(1) - inner).abs() < 1e-14);
        assert!((z.zeta(2) - outer).abs() < 1e-14);
        assert!((inner - 0.524_647_6).abs() < 1e-7);
        assert!((outer - 1.650_680_1).abs() < 1e-7);
    }

    #[test]
    fn zero_order_validation() {
        assert!(hermite_zeros(0).is_err());
        assert!(hermite_zeros(3).is_err());
        assert_eq!(hermite_zeros_any(3).unwrap().as_slice()[1], 0.0);
    }

    #[test]
    fn zeros_are_symmetric_and_sorted() {
        for m in (2..=80).step_by(2) {
            let z = hermite_zeros(m).unwrap();
            let s = z.as_slice();
            assert_eq!(s.len(), m);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            for i in 0..m {
                assert_eq!(s[i], -s[m - 1 - i]);
            }
        }
    }

    #[test]
    fn zero_residuals() {
        for &m in &[10usize, 64, 270] {
            let z = hermite_zeros(m).unwrap();
            for &t in z.positive() {
                let local_max = (0..=200)
                    .map(|i| hermite_value(m, t - 1.0 + i as f64 / 100.0).abs())
                    .fold(0.0, f64::max);
                assert!(hermite_value(m, t).abs() < 1e-12 * local_max);
            }
        }
    }
}
