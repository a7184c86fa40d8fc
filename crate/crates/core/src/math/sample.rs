use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Matrix, RngStream};
use crate::error::{shape_err, Error, Result};

pub fn standard_normal_vec(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_vec(rows, cols, standard_normal_vec(rows * cols, rng)).expect("sized")
}

/// `mu + L ξ` with `ξ` i.i.d. standard normal.
pub fn sample_gaussian(mu: &[f64], l: &Matrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    let n = mu.len();
    if l.shape() != (n, n) {
        return Err(shape_err!("mean has {n} entries but factor is {:?}", l.shape()));
    }
    let xi = standard_normal_vec(n, rng);
    let mut out = mu.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        *o += l.row(i)[..=i].iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(out)
}

/// One draw from `Lap(0, scale)` by inverting the CDF on `U(-1/2, 1/2)`.
pub fn laplace(scale: f64, rng: &mut RngStream) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = -1/2 maps to an infinite draw
        if u > -0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

pub fn sample_laplace(scale: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Param(format!("laplace scale must be positive, got {scale}")));
    }
    Ok((0..n).map(|_| laplace(scale, rng)).collect())
}
