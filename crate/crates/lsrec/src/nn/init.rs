//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Uniform Glorot initialization over `[-limit, limit]` with
/// `limit = sqrt(6 / (fan_in + fan_out))`. Draw order is row-major,
/// so the same stream always yields the same matrix.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| {
            let u: f64 = rng.random();
            limit * (2.0 * u - 1.0)
        })
        .collect();
    Tensor::matrix(fan_in, fan_out, data)
}

/// Glorot-scaled vector used for embedding-style rows stored outside a
/// matrix, and for per-unit gate vectors.
pub fn glorot_vector(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, len: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            limit * (2.0 * u - 1.0)
        })
        .collect();
    Tensor::vector(data)
}

pub fn zeros_vector(len: usize) -> Tensor {
    Tensor::vector(vec![0.0; len])
}

pub fn ones_vector(len: usize) -> Tensor {
    Tensor::vector(vec![1.0; len])
}
