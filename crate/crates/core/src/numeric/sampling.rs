//! Seeded random streams and multivariate normal sampling.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed with a
//! separate 64-bit stream id, so `(seed, stream)` pairs give independent,
//! platform-stable sequences. Parallel Monte Carlo work is split into fixed
//! size chunks; chunk `i` always draws from stream `i`, so results do not
//! depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::linalg::{cholesky, CholeskyFactor, DEFAULT_JITTER_TOL};
use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Replications handled by one deterministic chunk.
pub const CHUNK_SIZE: usize = 8192;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Runs `total` replications in chunks of [`CHUNK_SIZE`], chunk `i` on
/// stream `stream_base + i`, and folds the per-chunk results in chunk order.
pub fn chunked<T, F, R>(total: usize, seed: u64, stream_base: u64, work: F, identity: T, reduce: R) -> T
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
    R: Fn(T, T) -> T,
{
    let chunks = total.div_ceil(CHUNK_SIZE);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK_SIZE.min(total - c * CHUNK_SIZE);
            let mut rng = stream_rng(seed, stream_base.wrapping_add(c as u64));
            work(&mut rng, n)
        })
        .collect();
    parts.into_iter().fold(identity, reduce)
}

/// Multivariate normal sampler with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: CholeskyFactor,
    seed: u64,
    stream: u64,
}

impl MvnSampler {
    /// Jitter is scaled by the largest diagonal entry of `covariance`.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        if covariance.nrows() != mean.len() {
            return Err(Error::domain(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.diagonal().max().max(f64::MIN_POSITIVE);
        let factor = cholesky(&covariance, DEFAULT_JITTER_TOL * scale)?;
        Ok(Self {
            mean,
            covariance,
            factor,
            seed,
            stream: 0,
        })
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// `count × dim` matrix of draws; row `r` is one realization.
    pub fn sample(&self, count: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        let mut rng = stream_rng(self.seed, self.stream);
        let mut z = vec![0.0; d];
        let l = &self.factor.lower;
        for r in 0..count {
            for zi in z.iter_mut() {
                *zi = standard_normal(&mut rng);
            }
            for i in 0..d {
                let mut acc = self.mean[i];
                for (j, zj) in z.iter().enumerate().take(i + 1) {
                    acc += l[(i, j)] * zj;
                }
                out[(r, i)] = acc;
            }
        }
        out
    }
}

/// Convenience wrapper matching the sampler contract.
pub fn mvn_sample(sampler: &MvnSampler, count: usize) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::domain("sample count must be positive"));
    }
    Ok(sampler.sample(count))
}

/// Fills `out` with `L z` for a fresh standard normal vector `z`.
pub(crate) fn correlated_normal(rng: &mut StreamRng, lower: &DMatrix<f64>, z: &mut [f64], out: &mut [f64]) {
    let d = z.len();
    for zi in z.iter_mut() {
        *zi = standard_normal(rng);
    }
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += lower[(i, j)] * z[j];
        }
        out[i] = acc;
    }
}
