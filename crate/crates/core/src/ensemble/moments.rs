use std::f64::consts::PI;

use serde::Serialize;

use super::engine::{bootstrap_blocks, run_blocks, std_dev, BOOTSTRAP_RESAMPLES, STREAM_FIRST};
use crate::error::Result;
use crate::sampling::{sample_invariant, substream};
use crate::scenario::ScenarioSequence;

const NAMES: [&str; 6] = ["1", "r", "phi", "r^2", "r*phi", "phi^2"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub disk: usize,
    pub moment: &'static str,
    pub observed: f64,
    pub exact: f64,
    pub stderr: f64,
}

impl MomentCheck {
    /// `|observed − exact| / stderr`.
    pub fn z_score(&self) -> f64 {
        (self.observed - self.exact).abs() / self.stderr
    }
}

/// Moments `E[m(r, φ) 1_i]` after `n` steps of a sample from the normalized
/// `cos φ dr dφ`, against their values under that measure.
pub fn invariance_moments(scenario: &ScenarioSequence, n: usize, n_particles: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    let config = scenario.config(0);
    let disks = config.len();
    let sums = run_blocks(
        scenario,
        n_particles,
        n,
        6 * disks,
        |i| Ok((sample_invariant(config, &mut substream(seed, STREAM_FIRST + i)), 1)),
        |_, x, out| {
            out.fill(0.0);
            let (r, p) = (x.r, x.phi);
            let m = [1.0, r, p, r * r, r * p, p * p];
            out[6 * x.disk..6 * x.disk + 6].copy_from_slice(&m);
        },
    )?;
    let means = &sums.means()[n];
    let mut boot = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); 6 * disks];
    for r in 0..BOOTSTRAP_RESAMPLES {
        let idx = bootstrap_blocks(seed, sums.sizes.len(), r);
        for (b, v) in boot.iter_mut().zip(&sums.resampled_means(&idx)[n]) {
            b.push(*v);
        }
    }
    let total: f64 = config.disks().iter().map(|d| d.perimeter()).sum();
    let mut out = Vec::with_capacity(6 * disks);
    for (i, d) in config.disks().iter().enumerate() {
        let (p, l) = (d.perimeter() / total, d.perimeter());
        let phi2 = PI * PI / 4.0 - 2.0;
        let exact = [p, p * l / 2.0, 0.0, p * l * l / 3.0, 0.0, p * phi2];
        for k in 0..6 {
            out.push(MomentCheck {
                disk: i,
                moment: NAMES[k],
                observed: means[6 * i + k],
                exact: exact[k],
                stderr: std_dev(&boot[6 * i + k]),
            });
        }
    }
    Ok(out)
}
