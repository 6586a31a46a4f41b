//! Reproducible Monte Carlo plumbing: keyed random streams, mergeable
//! moment accumulators and a chunked parallel ensemble driver whose output
//! does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paths per work unit. Chunks are merged in index order.
const CHUNK: u64 = 1024;

/// Identifies an independent family of random streams. Each path index and
/// each branch (negative/positive time, thinning, ...) gets its own
/// ChaCha stream derived from the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub const fn new(seed: u64, stream: u64) -> Self {
        StreamKey { seed, stream }
    }

    /// Derive a sub-key, e.g. one per scenario check, so unrelated checks
    /// never share random numbers.
    pub fn child(self, tag: u64) -> StreamKey {
        StreamKey {
            seed: self.seed,
            stream: splitmix(self.stream ^ splitmix(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    /// Generator for `(path, branch)`.
    pub fn rng(self, path: u64, branch: u32) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.stream.to_le_bytes());
        seed[16..20].copy_from_slice(&branch.to_le_bytes());
        seed[24..32].copy_from_slice(&splitmix(self.seed ^ self.stream).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(path);
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Welford running moments with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.mean(),
            stderr: self.stderr(),
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl MeanEstimate {
    /// `|mean - target| <= sigmas * stderr`, with a tiny absolute floor so
    /// that zero-variance estimators of an exact target pass.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr + 1e-12 * (1.0 + target.abs())
    }

    /// Two independent estimates agree within `sigmas` combined stderr.
    pub fn agrees_with_estimate(&self, other: &MeanEstimate, sigmas: f64) -> bool {
        let se = self.stderr.hypot(other.stderr);
        (self.mean - other.mean).abs() <= sigmas * se + 1e-12 * (1.0 + self.mean.abs())
    }
}

/// Evaluate `width` path functionals on paths `0..n` and return their
/// means. `eval(path, out)` must fill `out` deterministically from the path
/// index alone. Any non-finite value poisons the estimate.
pub fn ensemble<F>(key: StreamKey, n: u64, width: usize, eval: F) -> Result<Vec<MeanEstimate>>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<std::result::Result<Vec<Moments>, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            let mut buf = vec![0.0; width];
            let end = ((c + 1) * CHUNK).min(n);
            for path in c * CHUNK..end {
                eval(path, &mut buf);
                for (m, &v) in acc.iter_mut().zip(&buf) {
                    if !v.is_finite() {
                        return Err(path);
                    }
                    m.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for part in partials {
        let part = part.map_err(|path| Error::PoisonedEstimate {
            stream: key.stream,
            path,
        })?;
        for (t, p) in total.iter_mut().zip(&part) {
            t.merge(p);
        }
    }
    Ok(total.iter().map(Moments::estimate).collect())
}
