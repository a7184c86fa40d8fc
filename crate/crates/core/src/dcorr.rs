//! Sample distance covariance and distance correlation.
//!
//! Distances are exact; the gradient of a distance uses the smoothed norm
//! `sqrt(sq + DIST_SMOOTHING)` in its denominator so it stays defined (and
//! zero) when two rows coincide.

use crate::error::{shape_err, Result};
use crate::math::Matrix;

pub const DIST_SMOOTHING: f64 = 1e-12;

/// Marginal dcov below this makes dcorr degenerate (defined as 0).
pub const DEGENERATE_DCOV: f64 = 1e-12;

/// Pairwise euclidean distances between rows; symmetric with zero diagonal.
pub fn pairwise_dist(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for j in 0..n {
        let xj = x.row(j);
        for k in (j + 1)..n {
            let sq: f64 = xj.iter().zip(x.row(k)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = sq.sqrt();
            d[(j, k)] = v;
            d[(k, j)] = v;
        }
    }
    d
}

/// `D̂ⱼₖ = Dⱼₖ − rowmeanⱼ − colmeanₖ + grandmean`.
pub fn double_center(d: &Matrix) -> Result<Matrix> {
    let (n, c) = d.shape();
    if n != c {
        return Err(shape_err!("double_center needs a square matrix, got {n}x{c}"));
    }
    if n == 0 {
        return Ok(d.clone());
    }
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = d.row_sums().into_iter().map(|s| s * inv).collect();
    let col_means: Vec<f64> = d.col_sums().into_iter().map(|s| s * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            out[(j, k)] = d[(j, k)] - row_means[j] - col_means[k] + grand;
        }
    }
    Ok(out)
}

fn centered(x: &Matrix) -> Matrix {
    double_center(&pairwise_dist(x)).expect("pairwise distances are square")
}

fn check_pair(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(shape_err!("batch row counts differ: {} vs {}", x.rows(), y.rows()));
    }
    if x.rows() < 2 {
        return Err(shape_err!("distance statistics need n >= 2 rows, got {}", x.rows()));
    }
    Ok(())
}

fn dcov_centered(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows() as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>() / (n * n)
}

/// `(1/n²) Σⱼ Σₖ x̂ⱼₖ ŷⱼₖ`.
pub fn dcov(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(x, y)?;
    Ok(dcov_centered(&centered(x), &centered(y)))
}

/// Distance correlation in `[0, 1]`; 0 when either marginal is degenerate.
pub fn dcorr(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(x, y)?;
    let a = centered(x);
    let b = centered(y);
    Ok(dcorr_from_centered(&a, &b))
}

pub(crate) fn dcorr_from_centered(a: &Matrix, b: &Matrix) -> f64 {
    let xx = dcov_centered(a, a);
    let yy = dcov_centered(b, b);
    if xx < DEGENERATE_DCOV || yy < DEGENERATE_DCOV {
        return 0.0;
    }
    let xy = dcov_centered(a, b).max(0.0);
    (xy / (xx * yy).sqrt()).clamp(0.0, 1.0)
}
