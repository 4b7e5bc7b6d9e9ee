//! Seeded random streams.
//!
//! Every parallel work item draws from its own ChaCha stream keyed by
//! `(seed, index)`, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Mat, Vector};

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Zero-mean Gaussian vector with covariance `cov_sqrt · cov_sqrtᵀ`.
pub fn correlated_gaussian<R: Rng + ?Sized>(rng: &mut R, cov_sqrt: &Mat) -> Vector {
    cov_sqrt * gaussian_vector(rng, cov_sqrt.ncols())
}
