//! Matrix-global noise on the discrete NtD operator:
//! `Λ^δ = Λ + η‖Λ‖₂ E` with `E = Ẽ/‖Ẽ‖₂` and `Ẽ` uniform on `[−1, 1]`.
//!
//! Random entries come from ChaCha8 seeded through `seed_from_u64`, which is
//! portable across platforms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Realized noise parameters, recorded alongside every result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisySpec {
    pub eta: f64,
    pub seed: u64,
    /// `η‖Λ‖₂`.
    pub delta: f64,
    pub symmetric: bool,
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.is_square() && a == &a.transpose() {
        a.clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    } else {
        a.clone().singular_values().max()
    }
}

/// Normalized random noise matrix. With `symmetric`, `Ẽ` is replaced by
/// `(Ẽ + Ẽᵀ)/2` before normalization.
pub fn noise_matrix_with(dim: usize, seed: u64, symmetric: bool) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return invalid("noise matrix dimension must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major fill so the stream layout does not depend on storage order
    let mut e = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            e[(i, j)] = rng.random_range(-1.0..=1.0);
        }
    }
    if symmetric {
        e = (&e + e.transpose()) * 0.5;
    }
    let norm = spectral_norm(&e);
    Ok(e / norm)
}

pub fn noise_matrix(dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    noise_matrix_with(dim, seed, true)
}

/// Returns `Λ^δ` and the realized noise parameters.
pub fn perturb(ntd: &DMatrix<f64>, eta: f64, seed: u64) -> Result<(DMatrix<f64>, NoisySpec)> {
    perturb_with(ntd, eta, seed, true)
}

pub fn perturb_with(
    ntd: &DMatrix<f64>,
    eta: f64,
    seed: u64,
    symmetric: bool,
) -> Result<(DMatrix<f64>, NoisySpec)> {
    if !(eta.is_finite() && eta >= 0.0) {
        return invalid(format!("noise level must be nonnegative, got {eta}"));
    }
    if !ntd.is_square() {
        return invalid("NtD matrix must be square");
    }
    let delta = eta * spectral_norm(ntd);
    let spec = NoisySpec {
        eta,
        seed,
        delta,
        symmetric,
    };
    if eta == 0.0 {
        return Ok((ntd.clone(), spec));
    }
    let e = noise_matrix_with(ntd.nrows(), seed, symmetric)?;
    Ok((ntd + e * delta, spec))
}
