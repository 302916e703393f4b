//! Reference values computed by routes that share no code with the main
//! pipeline: fixed-order Gauss–Legendre arc integrals, spectral closed forms
//! of the flat problem, and explicit harmonic decay rates.

use std::f64::consts::PI;

use crate::dyadic::TGrid;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// ∫_a^b f with an optional integrable x^{-1/2}-type singularity at either
/// end, removed by x = a + s² (left) or x = b - s² (right).
pub fn arc_integral(f: &dyn Fn(f64) -> f64, a: f64, b: f64, singular: (bool, bool), rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (x, w) = rule;
    let plain = |a: f64, b: f64| -> f64 {
        let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
        x.iter().zip(w).map(|(xi, wi)| wi * f(m + r * xi)).sum::<f64>() * r
    };
    let left = |a: f64, b: f64| -> f64 {
        let s1 = (b - a).sqrt();
        let (m, r) = (s1 / 2.0, s1 / 2.0);
        x.iter().zip(w).map(|(xi, wi)| {
            let s = m + r * xi;
            wi * f(a + s * s) * 2.0 * s
        }).sum::<f64>() * r
    };
    let right = |a: f64, b: f64| -> f64 {
        let s1 = (b - a).sqrt();
        let (m, r) = (s1 / 2.0, s1 / 2.0);
        x.iter().zip(w).map(|(xi, wi)| {
            let s = m + r * xi;
            wi * f(b - s * s) * 2.0 * s
        }).sum::<f64>() * r
    };
    match singular {
        (false, false) => plain(a, b),
        (true, false) => left(a, b),
        (false, true) => right(a, b),
        (true, true) => {
            let m = (a + b) / 2.0;
            left(a, m) + right(m, b)
        }
    }
}

/// max over every dyadic arc of level ≤ depth of (⨍w)(⨍w^{-1}), for a
/// weight whose only singularity sits at 0 ≡ 1.
pub fn brute_force_a2(w: &dyn Fn(f64) -> f64, depth: u32) -> f64 {
    let rule = gauss_legendre(40);
    let inv = |x: f64| 1.0 / w(x);
    let mut best: f64 = 1.0;
    for level in 0..=depth {
        let count = 1u64 << level;
        let len = 1.0 / count as f64;
        for k in 0..count {
            let (a, b) = (k as f64 * len, (k + 1) as f64 * len);
            let sing = (k == 0, k == count - 1);
            let m = arc_integral(w, a, b, sing, &rule) / len;
            let mi = arc_integral(&inv, a, b, sing, &rule) / len;
            best = best.max(m * mi);
        }
    }
    best
}

/// |2 sin πx|^a.
pub fn sine_power(a: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (2.0 * (PI * x).sin()).abs().powf(a)
}

/// Eigenvalues λ > 0 of |D| for the flat weight on N points:
/// 2 sin(πk/N)/h for k = 1..N-1.
pub fn flat_d_spectrum(n: usize) -> Vec<f64> {
    (1..n).map(|k| 2.0 * (PI * k as f64 / n as f64).sin() * n as f64).collect()
}

/// For B = I and w = 1 every v in the range of D is a combination of
/// eigenvectors of D, so the quadratic ratio lies between the extremes of
/// Σ_j Δ u_j²/(1 + u_j²)², u_j = t_jλ, over the spectrum; both tend to
/// ∫_0^∞ u/(1+u²)² du = 1/2.
pub fn flat_quadratic_range(n: usize, tgrid: &TGrid) -> (f64, f64) {
    let ts = tgrid.ts();
    let values: Vec<f64> = flat_d_spectrum(n)
        .into_iter()
        .map(|l| ts.iter().map(|t| {
            let u = t * l;
            tgrid.dlog() * u * u / (1.0 + u * u).powi(2)
        }).sum())
        .collect();
    (values.iter().copied().fold(f64::INFINITY, f64::min), values.iter().copied().fold(0.0, f64::max))
}

/// Decay rate μ of the discrete harmonic extension e^{-μt} of the k-th
/// Fourier mode on the flat N-point grid.
pub fn flat_harmonic_rate(n: usize, k: usize) -> f64 {
    2.0 * (PI * k as f64 / n as f64).sin() * n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = gauss_legendre(10);
        let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn singular_endpoint_integral() {
        // ∫_0^1 x^{-1/2} dx = 2
        let rule = gauss_legendre(20);
        let f = |x: f64| x.powf(-0.5);
        assert!((arc_integral(&f, 0.0, 1.0, (true, false), &rule) - 2.0).abs() < 1e-13);
        let g = |x: f64| (1.0 - x).powf(-0.5);
        assert!((arc_integral(&g, 0.0, 1.0, (false, true), &rule) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn constant_weight_has_unit_constant() {
        assert!((brute_force_a2(&|_| 3.0, 6) - 1.0).abs() < 1e-14);
    }
}
