//! Deterministic parallel Monte Carlo engine.
//!
//! Paths are split into fixed-size chunks; each chunk accumulates its own
//! statistics with paths visited in index order, and chunk accumulators are
//! merged sequentially in chunk order. Together with per-path RNG streams
//! (`stream_index = path_index`) this makes every estimate bit-identical
//! regardless of how many worker threads rayon uses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Chunk width for the deterministic reduction. Fixed: changing it reorders
/// floating-point sums and breaks golden files.
pub(crate) const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub master_seed: u64,
}

impl McConfig {
    pub fn new(n_paths: usize, master_seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be >= 1".into()));
        }
        Ok(Self {
            n_paths,
            master_seed,
        })
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// Distance from `target` measured in standard errors; `f64::INFINITY`
    /// when the estimator has zero variance and the means differ.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.std_error
        }
    }
}

/// Streaming mean / second-moment accumulator (Welford update, Chan merge).
/// A constant input sequence yields exactly zero variance, so estimates of
/// deterministic payoffs report a standard error of exactly zero.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub(crate) fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / total;
        self.count += other.count;
    }

    pub(crate) fn estimate(&self, n: usize) -> McEstimate {
        debug_assert_eq!(self.count, n);
        let std_error = if n > 1 {
            let var = (self.m2 / (n as f64 - 1.0)).max(0.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            mean: self.mean,
            std_error,
            n_paths: n,
        }
    }
}

/// Runs `per_path` for every path index with its own RNG stream, merging
/// chunk-local accumulators in fixed order.
///
/// `A` is the chunk accumulator; `per_path` may reuse chunk-local scratch
/// space because chunks are processed by a single worker each.
pub(crate) fn chunked_fold<A, I, F, M>(mc: &McConfig, init: I, per_path: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize, &mut RngStream) + Sync,
    M: Fn(A, A) -> A,
{
    let n = mc.n_paths;
    let chunk_starts: Vec<usize> = (0..n).step_by(MC_CHUNK).collect();
    let partials: Vec<A> = chunk_starts
        .into_par_iter()
        .map(|start| {
            let end = (start + MC_CHUNK).min(n);
            let mut acc = init();
            for path in start..end {
                let mut stream = RngStream::new(mc.master_seed, path as u64);
                per_path(&mut acc, path, &mut stream);
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .reduce(merge)
        .expect("n_paths >= 1 yields at least one chunk")
}
