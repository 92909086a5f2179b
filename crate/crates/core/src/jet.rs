//! Truncated Taylor series arithmetic for exact-to-roundoff derivatives of the
//! smooth spectral profiles.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Taylor coefficients `a_0 + a_1 ε + … + a_K ε^K` of a function around a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet(Vec<f64>);

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Jet(c)
    }

    /// The independent variable at `x`.
    pub fn variable(x: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x;
        if order > 0 {
            c[1] = 1.0;
        }
        Jet(c)
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    /// `f(x), f'(x), …, f^{(K)}(x)`.
    pub fn derivatives(&self) -> Vec<f64> {
        let mut fact = 1.0;
        self.0
            .iter()
            .enumerate()
            .map(|(m, c)| {
                if m > 0 {
                    fact *= m as f64;
                }
                c * fact
            })
            .collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Jet(self.0.iter().map(|c| c * s).collect())
    }

    pub fn offset(&self, s: f64) -> Self {
        let mut c = self.0.clone();
        c[0] += s;
        Jet(c)
    }

    pub fn recip(&self) -> Self {
        Jet::constant(1.0, self.order()) / self.clone()
    }

    pub fn exp(&self) -> Self {
        // b' = a' b  ⇒  m b_m = Σ_{k=1}^{m} k a_k b_{m−k}
        let k_max = self.order();
        let mut b = vec![0.0; k_max + 1];
        b[0] = self.0[0].exp();
        for m in 1..=k_max {
            let s: f64 = (1..=m).map(|k| k as f64 * self.0[k] * b[m - k]).sum();
            b[m] = s / m as f64;
        }
        Jet(b)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        Jet(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        Jet(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let k_max = self.order();
        Jet((0..=k_max)
            .map(|m| (0..=m).map(|k| self.0[k] * rhs.0[m - k]).sum())
            .collect())
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        let k_max = self.order();
        let mut q = vec![0.0; k_max + 1];
        for m in 0..=k_max {
            let s: f64 = (1..=m).map(|k| rhs.0[k] * q[m - k]).sum();
            q[m] = (self.0[m] - s) / rhs.0[0];
        }
        Jet(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_square() {
        // d^m/dx^m e^{x²} at x = 0.5
        let x = Jet::variable(0.5, 4);
        let d = (x.clone() * x).exp().derivatives();
        let e = 0.25f64.exp();
        let want = [e, 2.0 * 0.5 * e, (2.0 + 4.0 * 0.25) * e, (12.0 * 0.5 + 8.0 * 0.125) * e];
        for m in 0..4 {
            assert!((d[m] - want[m]).abs() < 1e-13, "order {m}");
        }
    }

    #[test]
    fn quotient_rule() {
        let x = Jet::variable(2.0, 3);
        let d = (Jet::constant(1.0, 3) / x).derivatives();
        assert!((d[0] - 0.5).abs() < 1e-15);
        assert!((d[1] + 0.25).abs() < 1e-15);
        assert!((d[2] - 0.25).abs() < 1e-15);
        assert!((d[3] + 0.375).abs() < 1e-15);
    }
}
