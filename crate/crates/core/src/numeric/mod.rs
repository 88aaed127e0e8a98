//! Shared numerical utilities: normal-distribution functions, adaptive
//! quadrature, bivariate/multivariate normal probabilities, seed derivation,
//! and small matrix helpers.

pub mod bvn;
pub mod mvn;
pub mod normal;
pub mod quad;
pub mod seed;

use nalgebra::DMatrix;

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n − 1 denominator); 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Soft-threshold operator `sign(u) * max(|u| - c, 0)`.
pub fn soft_threshold(u: f64, c: f64) -> f64 {
    if u > c {
        u - c
    } else if u < -c {
        u + c
    } else {
        0.0
    }
}

/// Project a symmetric matrix to the nearest correlation-like matrix by
/// clipping eigenvalues at `floor` and rescaling to a unit diagonal.
pub fn clip_to_correlation(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let clipped = sym.eigenvalues.map(|e| e.max(floor));
    let mut out = &sym.eigenvectors * DMatrix::from_diagonal(&clipped) * sym.eigenvectors.transpose();
    let d: Vec<f64> = (0..out.nrows()).map(|i| out[(i, i)].sqrt()).collect();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] /= d[i] * d[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_basics() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn clip_repairs_indefinite_matrix() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.95;
        m[(1, 0)] = 0.95;
        m[(1, 2)] = 0.95;
        m[(2, 1)] = 0.95;
        m[(0, 2)] = -0.9;
        m[(2, 0)] = -0.9;
        let fixed = clip_to_correlation(&m, 1e-8);
        let eig = nalgebra::SymmetricEigen::new(fixed.clone());
        assert!(eig.eigenvalues.iter().all(|&e| e > -1e-12));
        for i in 0..3 {
            assert!((fixed[(i, i)] - 1.0).abs() < 1e-12);
        }
    }
}
