//! Random well-conditioned instances shared by the integration tests.

#![allow(dead_code)]

use fdeh_core::numerics::{c, CMatrix, PsdMatrix};
use fdeh_core::{CovariancePair, SubsystemChannels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random PSD matrix with a random rank and the given trace.
pub fn psd(rng: &mut ChaCha8Rng, dim: usize, trace: f64) -> PsdMatrix {
    let rank = rng.random_range(1..=dim);
    let f = gaussian(rng, dim, rank);
    let scale = trace / f.norm_squared();
    PsdMatrix::from_factor(f * c(scale.sqrt(), 0.0))
}

/// Subsystem blocks with `M_I, M_h, N_I, N_h` in `1..=max_dim` and noise
/// log-uniform in `[1e-3, 1]`.
pub fn subsystem(rng: &mut ChaCha8Rng, max_dim: usize) -> SubsystemChannels {
    let m_i = rng.random_range(1..=max_dim);
    let m_h = rng.random_range(1..=max_dim);
    let n_i = rng.random_range(1..=max_dim);
    let n_h = rng.random_range(1..=max_dim);
    let noise = 10f64.powf(rng.random_range(-3.0..0.0));
    SubsystemChannels {
        h_i: gaussian(rng, m_i, n_i),
        h_h: gaussian(rng, n_h, m_h),
        h1: gaussian(rng, m_i, m_h),
        h2: gaussian(rng, n_h, n_i),
        noise,
    }
}

/// Covariances with traces in `[0.1, 10]`.
pub fn covariances(rng: &mut ChaCha8Rng, sub: &SubsystemChannels) -> CovariancePair {
    let t1 = 10f64.powf(rng.random_range(-1.0..1.0));
    let t2 = 10f64.powf(rng.random_range(-1.0..1.0));
    CovariancePair::new(psd(rng, sub.m_h(), t1), psd(rng, sub.n_i(), t2))
}
