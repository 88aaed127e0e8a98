//! Bivariate standard normal distribution function.
//!
//! Uses the single-integral reduction
//! Φ₂(h, k; ρ) = Φ(h)Φ(k) + (1/2π) ∫₀^{arcsin ρ} exp(−q(θ)) dθ with
//! q(θ) = (h−k)²/(2cos²θ) + hk/(1+sinθ), evaluated by adaptive
//! Gauss–Kronrod quadrature. The transformed integrand is smooth even as
//! ρ → ±1, so the quadrature reaches absolute errors well below 1e-10.

use super::{normal, quad};

const TWO_PI: f64 = std::f64::consts::TAU;

/// P(X ≤ h, Y ≤ k) for standard bivariate normal (X, Y) with correlation `rho`.
pub fn cdf(h: f64, k: f64, rho: f64) -> f64 {
    assert!(
        (-1.0..=1.0).contains(&rho) || rho.abs() <= 1.0 + 1e-12,
        "correlation out of range: {rho}"
    );
    let rho = rho.clamp(-1.0, 1.0);
    if rho == 1.0 {
        return normal::cdf(h.min(k));
    }
    if rho == -1.0 {
        return (normal::cdf(h) + normal::cdf(k) - 1.0).max(0.0);
    }
    let base = normal::cdf(h) * normal::cdf(k);
    if rho == 0.0 {
        return base;
    }
    let dd = 0.5 * (h - k) * (h - k);
    let hk = h * k;
    let integrand = move |theta: f64| {
        let s = theta.sin();
        let c2 = (1.0 - s) * (1.0 + s);
        // c2 > 0 on the open interval; the limit at |theta| = asin(1) is finite.
        let q = if c2 > 0.0 {
            dd / c2 + hk / (1.0 + s)
        } else {
            return 0.0;
        };
        (-q).exp()
    };
    let upper = rho.asin();
    let correction = if upper >= 0.0 {
        quad::integrate(&integrand, 0.0, upper, 1e-14)
    } else {
        -quad::integrate(&integrand, upper, 0.0, 1e-14)
    };
    (base + correction / TWO_PI).clamp(0.0, 1.0)
}

/// P(X > z, Y > z): upper orthant for equal thresholds.
pub fn upper_orthant(z: f64, rho: f64) -> f64 {
    cdf(-z, -z, rho)
}
