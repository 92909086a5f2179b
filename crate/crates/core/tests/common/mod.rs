//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use hermite_frames::expansion::HermiteExpansion;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gauss–Hermite rule for `∫ f(x) dx = Σ λ_i e^{x_i²}·e^{−x_i²} f(x_i)`, with
/// `λ_i = w_i e^{x_i²}`. Newton iteration on the orthonormal Hermite
/// functions, seeded with the classical asymptotic guesses.
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    /// `w_i e^{x_i²}`: integrates `f` directly when `f` decays like `e^{−x²}`.
    pub lambda: Vec<f64>,
}

/// `(ψ_n(z), ψ_{n−1}(z))` for the orthonormal Hermite functions.
fn psi_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25) * (-0.5 * z * z).exp();
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
    }
    (p1, p2)
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        let m = (n + 1) / 2;
        let mut x = vec![0.0; n];
        let mut lam = vec![0.0; n];
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut prev = 0.0;
            for _ in 0..200 {
                let (p, q) = psi_pair(n, z);
                let dp = (2.0 * nf).sqrt() * q - z * p;
                let step = p / dp;
                z -= step;
                prev = q;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    prev = psi_pair(n, z).1;
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            let l = 1.0 / (nf * prev * prev);
            lam[i] = l;
            lam[n - 1 - i] = l;
        }
        GaussHermite { nodes: x, lambda: lam }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.lambda)
            .map(|(&x, &l)| f(x) * l)
            .sum()
    }
}

/// `h_k(x)` for rational `x = num/den`, from the exact integer recurrence of
/// `H_k` and one final rounding.
pub fn hermite_function_exact(k: u32, num: i64, den: i64) -> f64 {
    let x = BigRational::new(BigInt::from(num), BigInt::from(den));
    let two = BigRational::from_integer(BigInt::from(2));
    let mut h0 = BigRational::one();
    let mut h1 = &two * &x;
    if k == 0 {
        h1 = h0.clone();
    } else {
        for j in 1..k {
            let next = &two * &x * &h1 - &two * BigRational::from_integer(BigInt::from(j)) * &h0;
            h0 = h1;
            h1 = next;
        }
    }
    // H_k² / (2^k k!) is moderate in size; the square root and the Gaussian
    // factor are applied in floating point.
    let mut denom = BigInt::one() << k as usize;
    for j in 2..=k {
        denom *= BigInt::from(j);
    }
    let ratio = &h1 * &h1 / BigRational::from_integer(denom);
    let sign = if h1 < BigRational::zero() { -1.0 } else { 1.0 };
    let xf = num as f64 / den as f64;
    sign * ratio.to_f64().expect("finite").sqrt() * (-0.5 * xf * xf).exp() * std::f64::consts::PI.powf(-0.25)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One-dimensional expansion of exact degree `degree` with Gaussian complex
/// coefficients.
pub fn random_expansion(rng: &mut ChaCha8Rng, degree: usize) -> HermiteExpansion {
    let coeffs = (0..=degree)
        .map(|_| Complex64::new(normal(rng), normal(rng)))
        .collect();
    HermiteExpansion::from_1d(coeffs)
}

pub fn relative_l2(a: &HermiteExpansion, b: &HermiteExpansion) -> f64 {
    let d = a.degree().max(b.degree());
    let (a, b) = (a.with_degree(d).unwrap(), b.with_degree(d).unwrap());
    a.l2_distance(&b) / b.l2_norm()
}
