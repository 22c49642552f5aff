//! Dense real matrices, seeded sampling, QR/SVD and one-dimensional
//! adaptive quadrature.

mod linalg;
pub(crate) mod math;
mod matrix;
pub mod quad;
mod rng;

pub use linalg::{
    haar_orthogonal, min_singular_value, qr, r_factor, singular_values, thin_svd, Qr, SingularSpectrum, SvdFactors,
    TINY_SINGULAR_RATIO,
};
pub use matrix::Matrix;
pub use rng::{mix_seed, sample_gaussian_matrix, SeededRng, Variance};
