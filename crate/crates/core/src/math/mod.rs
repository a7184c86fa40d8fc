//! Numerical kernels shared by every stage: dense matrices, seeded random
//! streams, small linear algebra and distribution samplers.

mod linalg;
mod matrix;
mod rng;
mod sample;

pub use linalg::{cholesky, cholesky_psd, psd_repair, random_orthonormal, EIGEN_FLOOR};
pub(crate) use matrix::gemm;
pub use matrix::Matrix;
pub use rng::{streams, RngStream};
pub use sample::{laplace, sample_gaussian, sample_laplace, standard_normal_matrix, standard_normal_vec};
