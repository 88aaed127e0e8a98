//! Multivariate normal rectangle probabilities in low dimension via the
//! separation-of-variables transform with randomized quasi-Monte Carlo
//! (Richtmyer lattice with random shifts). Deterministic for a fixed seed.

use nalgebra::DMatrix;
use rand::Rng;

use super::{normal, seed};
use crate::{Error, Result};

const SQRT_PRIMES: [f64; 8] = [
    1.4142135623730951, // sqrt 2
    1.7320508075688772, // sqrt 3
    2.23606797749979,   // sqrt 5
    2.6457513110645907, // sqrt 7
    3.3166247903554,    // sqrt 11
    3.605551275463989,  // sqrt 13
    4.123105625617661,  // sqrt 17
    4.358898943540674,  // sqrt 19
];

/// P(X_i ≤ upper_i for all i) for X ~ N(0, corr).
///
/// Returns the estimate and its Monte Carlo standard error. Sampling grows
/// geometrically until the standard error falls below `target_se`.
pub fn cdf(upper: &[f64], corr: &DMatrix<f64>, seed_value: u64, target_se: f64) -> Result<(f64, f64)> {
    let d = upper.len();
    assert!(d >= 1 && corr.nrows() == d && corr.ncols() == d);
    if d == 1 {
        return Ok((normal::cdf(upper[0]), 0.0));
    }
    let chol = cholesky_psd(corr)?;

    let shifts = 12usize;
    let mut n = 512usize;
    let max_points = 1 << 17;
    loop {
        let mut shift_means = Vec::with_capacity(shifts);
        for s in 0..shifts {
            let mut rng = seed::rng(seed_value, &[seed::tag("mvn-shift"), s as u64, n as u64]);
            let offsets: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>()).collect();
            let mut acc = 0.0;
            for m in 1..=n {
                acc += sov_integrand(upper, &chol, m, &offsets);
            }
            shift_means.push(acc / n as f64);
        }
        let est = crate::numeric::mean(&shift_means);
        let se = (crate::numeric::variance(&shift_means) / shifts as f64).sqrt();
        if se <= target_se || n >= max_points {
            return Ok((est.clamp(0.0, 1.0), se));
        }
        n *= 4;
    }
}

/// One point of the Genz separation-of-variables integrand.
fn sov_integrand(upper: &[f64], chol: &DMatrix<f64>, m: usize, offsets: &[f64]) -> f64 {
    let d = upper.len();
    let mut y = vec![0.0_f64; d - 1];
    let mut prob = normal::cdf(upper[0] / chol[(0, 0)]);
    let mut e_prev = prob;
    for i in 1..d {
        // Richtmyer sequence point for coordinate i − 1.
        let u = (m as f64 * SQRT_PRIMES[(i - 1) % SQRT_PRIMES.len()] + offsets[i - 1]).fract();
        // Periodize to reduce lattice artifacts (baker's transform).
        let u = 1.0 - (2.0 * u - 1.0).abs();
        let z = (u * e_prev).clamp(1e-300, 1.0 - 1e-16);
        y[i - 1] = normal::quantile(z);
        let mut t = upper[i];
        for j in 0..i {
            t -= chol[(i, j)] * y[j];
        }
        let e = normal::cdf(t / chol[(i, i)]);
        prob *= e;
        e_prev = e;
    }
    prob
}

/// Cholesky factor, falling back to an eigenvalue-clipped repair for
/// numerically semidefinite inputs.
fn cholesky_psd(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = corr.clone().cholesky() {
        return Ok(c.l());
    }
    let repaired = super::clip_to_correlation(corr, 1e-10);
    repaired
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("correlation matrix is not positive semidefinite".into()))
}
