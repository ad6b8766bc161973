use serde::Serialize;

use super::density::{check_envelope, draw, SmoothDensity};
use super::engine::{bootstrap_blocks, run_blocks, std_dev, BOOTSTRAP_RESAMPLES, STREAM_FIRST};
use super::observable::Observable;
use crate::error::{Error, Result};
use crate::sampling::substream;
use crate::scenario::ScenarioSequence;
use crate::stats::weighted_linear_fit;

/// Log-linear envelope `Δ_n ≈ C θⁿ` fitted where `Δ_n > 3·stderr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub theta: f64,
    pub r_squared: f64,
    /// Inclusive step range of the fit.
    pub range: (usize, usize),
    /// `Δ` at the start of the range over `Δ` at its end.
    pub decay_factor: f64,
    /// The range ended at the noise floor before the last step.
    pub truncated: bool,
}

/// Fits the first run of significant values (`Δ_n > 3 stderr_n`), starting
/// at its largest value so a rise before the decay does not bias `θ`.
/// Weights are `(Δ/stderr)²`, the inverse variance of `log Δ`.
pub fn fit_decay(delta: &[f64], stderr: &[f64]) -> Option<DecayFit> {
    let significant = |n: usize| delta[n] > 3.0 * stderr[n] && delta[n] > 0.0;
    let first = (0..delta.len()).find(|&n| significant(n))?;
    let last = (first..delta.len()).take_while(|&n| significant(n)).last()?;
    let peak = (first..=last).max_by(|&a, &b| delta[a].total_cmp(&delta[b]))?;
    if last < peak + 2 {
        return None;
    }
    let xs: Vec<f64> = (peak..=last).map(|n| n as f64).collect();
    let ys: Vec<f64> = (peak..=last).map(|n| delta[n].ln()).collect();
    let ws: Vec<f64> = (peak..=last).map(|n| (delta[n] / stderr[n]).powi(2)).collect();
    let f = weighted_linear_fit(&xs, &ys, &ws);
    Some(DecayFit {
        c: f.intercept.exp(),
        theta: f.slope.exp(),
        r_squared: f.r_squared,
        range: (peak, last),
        decay_factor: delta[peak] / delta[last],
        truncated: last + 1 < delta.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySeries {
    pub n: Vec<usize>,
    pub estimate_mu1: Vec<f64>,
    pub estimate_mu2: Vec<f64>,
    pub delta: Vec<f64>,
    /// Bootstrap standard error of `estimate_mu1 − estimate_mu2`.
    pub stderr: Vec<f64>,
    pub fit: Option<DecayFit>,
    /// Hölder data of `f` unknown.
    pub constants_unvalidated: bool,
    /// `d(K_{k−1}, K_k)` for each step used.
    pub step_distances: Vec<f64>,
    /// Acceptance rate of the mixture sampler.
    pub acceptance: f64,
}

/// Monte-Carlo estimate of `|∫ f∘F_n dμ¹ − ∫ f∘F_n dμ²|` for `n <= n_max`.
/// Both integrals are self-normalized importance averages over one sample of
/// `½(μ¹ + μ²)`.
#[allow(clippy::too_many_arguments)]
pub fn memory_loss(
    mu1: &SmoothDensity,
    mu2: &SmoothDensity,
    f: &Observable,
    scenario: &ScenarioSequence,
    n_max: usize,
    n_particles: usize,
    seed: u64,
) -> Result<DecaySeries> {
    if n_particles < 2 {
        return Err(Error::ParameterDomain("need at least two particles".into()));
    }
    if n_max > scenario.len() {
        return Err(Error::ParameterDomain(format!(
            "n_max {n_max} exceeds scenario length {}",
            scenario.len()
        )));
    }
    let config0 = scenario.config(0);
    check_envelope(mu1, config0)?;
    check_envelope(mu2, config0)?;
    let mixture = {
        let (a, b) = (mu1.clone(), mu2.clone());
        SmoothDensity::new(
            "mixture",
            move |x| 0.5 * (a.eval(x) + b.eval(x)),
            mu1.log_holder.max(mu2.log_holder),
            0.5 * (mu1.sup_bound + mu2.sup_bound),
        )?
    };
    // both integrals are estimated from one mixture sample with weights
    // 2ρ_i/(ρ¹+ρ²) <= 2, so the noise of their difference mostly cancels
    let sums = run_blocks(
        scenario,
        n_particles,
        n_max,
        4,
        |i| draw(&mixture, config0, &mut substream(seed, STREAM_FIRST + i)),
        |x0, x, out| {
            let (r1, r2) = (mu1.eval(x0), mu2.eval(x0));
            let (w1, w2) = (2.0 * r1 / (r1 + r2), 2.0 * r2 / (r1 + r2));
            let v = f.eval(x, config0);
            out.copy_from_slice(&[v * w1, v * w2, w1, w2]);
        },
    )?;
    let estimates = |m: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) { m.iter().map(|c| (c[0] / c[2], c[1] / c[3])).unzip() };
    let (m1, m2) = estimates(&sums.means());

    let mut boot = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); n_max + 1];
    for r in 0..BOOTSTRAP_RESAMPLES {
        let idx = bootstrap_blocks(seed, sums.sizes.len(), r);
        let (b1, b2) = estimates(&sums.resampled_means(&idx));
        for n in 0..=n_max {
            boot[n].push(b1[n] - b2[n]);
        }
    }
    let stderr: Vec<f64> = boot.iter().map(|v| std_dev(v)).collect();
    let delta: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| (a - b).abs()).collect();
    let fit = fit_decay(&delta, &stderr);
    Ok(DecaySeries {
        n: (0..=n_max).collect(),
        estimate_mu1: m1,
        estimate_mu2: m2,
        fit,
        delta,
        stderr,
        constants_unvalidated: f.holder(config0).is_none(),
        step_distances: scenario.steps()[..n_max].iter().map(|s| s.distance).collect(),
        acceptance: n_particles as f64 / sums.proposals as f64,
    })
}
