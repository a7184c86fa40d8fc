use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::{Matrix, RngStream};
use crate::error::{shape_err, Error, Result};

/// Relative eigenvalue floor applied by [`psd_repair`].
pub const EIGEN_FLOOR: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-9;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(r, c)];
        }
    }
    out
}

/// Random `p x k` matrix with orthonormal rows (`W Wᵀ = I_p`).
///
/// QR-factorizes a `k x p` standard Gaussian matrix and returns the
/// transpose of its orthonormal factor.
pub fn random_orthonormal(p: usize, k: usize, rng: &mut RngStream) -> Result<Matrix> {
    if p == 0 || p > k {
        return Err(shape_err!("random_orthonormal needs 1 <= p <= k, got p={p}, k={k}"));
    }
    let mut g = Matrix::zeros(k, p);
    for v in g.data_mut() {
        *v = StandardNormal.sample(rng);
    }
    let q = to_na(&g).qr().q();
    Ok(from_na(&q.transpose()))
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    let (r, c) = s.shape();
    if r != c {
        return Err(shape_err!("expected a square matrix, got {r}x{c}"));
    }
    for i in 0..r {
        for j in (i + 1)..r {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(shape_err!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    s[(i, j)],
                    s[(j, i)]
                ));
            }
        }
    }
    Ok(())
}

/// Clips eigenvalues below `EIGEN_FLOOR * max(1, λ_max)` up to that floor.
///
/// Returns the input (symmetrized) unchanged when no eigenvalue is below
/// the floor.
pub fn psd_repair(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s)?;
    let n = s.rows();
    let mut sym = s.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    if n == 0 {
        return Ok(sym);
    }
    let eig = SymmetricEigen::new(to_na(&sym));
    let lmax = eig.eigenvalues.max();
    let floor = EIGEN_FLOOR * lmax.max(1.0);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let mut out = from_na(&rebuilt);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = a;
            out[(j, i)] = a;
        }
    }
    Ok(out)
}

/// Plain Cholesky factorization; fails if `s` is not positive definite.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let n = s.rows();
    if s.cols() != n {
        return Err(shape_err!("cholesky needs a square matrix, got {:?}", s.shape()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for t in 0..j {
            d -= l[(j, t)] * l[(j, t)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Param(format!("matrix not positive definite at pivot {j}")));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for t in 0..j {
                v -= l[(i, t)] * l[(j, t)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(l)
}

/// Lower-triangular `L` with `L Lᵀ` equal to the PSD-repaired input.
pub fn cholesky_psd(s: &Matrix) -> Result<Matrix> {
    let repaired = psd_repair(s)?;
    match cholesky(&repaired) {
        Ok(l) => Ok(l),
        // Rounding in the rebuild can still leave a pivot at ~0; one more
        // nudge along the diagonal settles it.
        Err(_) => {
            let n = repaired.rows();
            let bump = EIGEN_FLOOR * repaired.data().iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let mut nudged = repaired;
            for i in 0..n {
                nudged[(i, i)] += bump;
            }
            cholesky(&nudged)
        }
    }
}
