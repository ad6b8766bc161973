use rand::Rng;
use rayon::prelude::*;

use crate::billiard::{BilliardMap, PhasePoint};
use crate::error::Result;
use crate::sampling::substream;
use crate::scenario::ScenarioSequence;
use crate::stats::pairwise_sum;

/// Upper bound on the number of particle blocks; blocks are the unit of
/// both parallel work and bootstrap resampling.
pub const MAX_BLOCKS: usize = 1000;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Stream offsets keep the particle families of one seed independent.
pub(crate) const STREAM_FIRST: u64 = 0;
pub(crate) const STREAM_SECOND: u64 = 1 << 40;
pub(crate) const STREAM_BOOTSTRAP: u64 = 3 << 40;

/// Per-block sums `data[block][n][channel]` of recorded channel values.
#[derive(Debug, Clone)]
pub(crate) struct BlockSums {
    pub sizes: Vec<usize>,
    pub steps: usize,
    pub channels: usize,
    pub data: Vec<Vec<f64>>,
    pub proposals: u64,
}

impl BlockSums {
    fn at(&self, b: usize, n: usize, c: usize) -> f64 {
        self.data[b][n * self.channels + c]
    }

    /// Channel means over all particles, `[n][channel]`.
    pub fn means(&self) -> Vec<Vec<f64>> {
        let total: usize = self.sizes.iter().sum();
        (0..self.steps)
            .map(|n| {
                (0..self.channels)
                    .map(|c| {
                        let v: Vec<f64> = (0..self.sizes.len()).map(|b| self.at(b, n, c)).collect();
                        pairwise_sum(&v) / total as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// Channel means for a multiset of blocks.
    pub fn resampled_means(&self, blocks: &[usize]) -> Vec<Vec<f64>> {
        let total: usize = blocks.iter().map(|&b| self.sizes[b]).sum();
        (0..self.steps)
            .map(|n| {
                (0..self.channels)
                    .map(|c| blocks.iter().map(|&b| self.at(b, n, c)).sum::<f64>() / total as f64)
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn block_count(n_particles: usize) -> usize {
    n_particles.clamp(1, MAX_BLOCKS)
}

/// Evolves `n_particles` particles for `n_max` steps of `scenario` and sums
/// `record(x_0, x_n, out)` per block. Particle `i` is produced by
/// `init(i)`, which returns the point and the proposals it took.
pub(crate) fn run_blocks<I, F>(
    scenario: &ScenarioSequence,
    n_particles: usize,
    n_max: usize,
    channels: usize,
    init: I,
    record: F,
) -> Result<BlockSums>
where
    I: Fn(u64) -> Result<(PhasePoint, u64)> + Sync,
    F: Fn(&PhasePoint, &PhasePoint, &mut [f64]) + Sync,
{
    let maps: Vec<BilliardMap<'_>> = (1..=n_max).map(|k| scenario.map(k)).collect::<Result<_>>()?;
    let blocks = block_count(n_particles);
    let steps = n_max + 1;
    let results: Vec<(Vec<f64>, u64, usize)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * n_particles / blocks;
            let hi = (b + 1) * n_particles / blocks;
            let mut sums = vec![0.0; steps * channels];
            let mut buf = vec![0.0; channels];
            let mut proposals = 0;
            for i in lo..hi {
                let (x0, t) = init(i as u64)?;
                proposals += t;
                let mut x = x0;
                for n in 0..steps {
                    if n > 0 {
                        x = maps[n - 1].step(x).map_err(|e| e.at_step(n))?.image;
                    }
                    record(&x0, &x, &mut buf);
                    for (s, v) in sums[n * channels..(n + 1) * channels].iter_mut().zip(&buf) {
                        *s += v;
                    }
                }
            }
            Ok((sums, proposals, hi - lo))
        })
        .collect::<Result<_>>()?;
    let mut out = BlockSums {
        sizes: Vec::with_capacity(blocks),
        steps,
        channels,
        data: Vec::with_capacity(blocks),
        proposals: 0,
    };
    for (sums, p, size) in results {
        out.data.push(sums);
        out.proposals += p;
        out.sizes.push(size);
    }
    Ok(out)
}

/// Block indices of bootstrap resample `r`.
pub(crate) fn bootstrap_blocks(seed: u64, blocks: usize, r: usize) -> Vec<usize> {
    let mut rng = substream(seed, STREAM_BOOTSTRAP + r as u64);
    (0..blocks).map(|_| rng.random_range(0..blocks)).collect()
}

/// Sample standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}
