use serde::Serialize;

use super::density::{check_envelope, draw, SmoothDensity};
use super::engine::{bootstrap_blocks, run_blocks, std_dev, BOOTSTRAP_RESAMPLES, STREAM_FIRST, STREAM_SECOND};
use super::memory::{fit_decay, DecayFit};
use super::observable::Observable;
use crate::error::{Error, Result};
use crate::sampling::{invariant_mass, sample_invariant, substream};
use crate::scenario::ScenarioSequence;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSeries {
    pub n: Vec<usize>,
    /// `mean(f(x_n) g(x_0)) − mean(f(x_n)) mean(g(x_0))` under `μ`.
    pub direct: Vec<f64>,
    /// `a (∫ f∘Fⁿ dμ′ − ∫ f∘Fⁿ dμ)` with `dμ′ = a⁻¹ (g̃ + a) dμ`.
    pub reduced: Vec<f64>,
    pub stderr_direct: Vec<f64>,
    pub stderr_reduced: Vec<f64>,
    /// Bootstrap standard error of `reduced − direct`.
    pub stderr_difference: Vec<f64>,
    /// `∫ g dμ` by quadrature; `g̃ = g − ∫ g dμ`.
    pub g_mean: f64,
    /// `a = 1 − inf g̃`.
    pub shift: f64,
    /// Fit of `|direct|` on its significant range.
    pub fit: Option<DecayFit>,
    pub constants_unvalidated: bool,
}

impl CorrelationSeries {
    /// Steps where the two estimators differ by more than `k` combined standard errors.
    pub fn disagreements(&self, k: f64) -> Vec<usize> {
        (0..self.n.len())
            .filter(|&i| (self.reduced[i] - self.direct[i]).abs() > k * self.stderr_difference[i])
            .collect()
    }
}

/// Correlation `∫ f∘Fⁿ g dμ − ∫ f dμ ∫ g dμ` for the normalized measure
/// `cos φ dr dφ`, estimated directly and through the shifted-density reduction.
pub fn correlation_decay(
    f: &Observable,
    g: &Observable,
    scenario: &ScenarioSequence,
    n_max: usize,
    n_particles: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    if n_particles < 2 {
        return Err(Error::ParameterDomain("need at least two particles".into()));
    }
    if n_max > scenario.len() {
        return Err(Error::ParameterDomain(format!(
            "n_max {n_max} exceeds scenario length {}",
            scenario.len()
        )));
    }
    let config = scenario.config(0).clone();
    let g_mean = g.invariant_mean(&config);
    let shift = 1.0 - (g.range().0 - g_mean);
    let mass = invariant_mass(&config);
    let g_sup = g.range().1 - g_mean;
    let lip = g.holder(&config).map_or(0.0, |h| h.constant);
    let prime = {
        let (g, config) = (g.clone(), config.clone());
        SmoothDensity::new(
            format!("shifted({})", g.name()),
            move |x| (g.eval(x, &config) - g_mean + shift) / (shift * mass),
            lip,
            (g_sup + shift) / (shift * mass),
        )?
    };
    check_envelope(&prime, &config)?;

    let direct = run_blocks(
        scenario,
        n_particles,
        n_max,
        3,
        |i| Ok((sample_invariant(&config, &mut substream(seed, STREAM_FIRST + i)), 1)),
        |x0, xn, out| {
            let (a, b) = (f.eval(xn, &config), g.eval(x0, &config));
            out[0] = a * b;
            out[1] = a;
            out[2] = b;
        },
    )?;
    let shifted = run_blocks(
        scenario,
        n_particles,
        n_max,
        1,
        |i| draw(&prime, &config, &mut substream(seed, STREAM_SECOND + i)),
        |_, xn, out| out[0] = f.eval(xn, &config),
    )?;

    let combine = |d: &[Vec<f64>], s: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        d.iter()
            .zip(s)
            .map(|(d, s)| (d[0] - d[1] * d[2], shift * (s[0] - d[1])))
            .unzip()
    };
    let (c_direct, c_reduced) = combine(&direct.means(), &shifted.means());
    let steps = n_max + 1;
    let mut boot = vec![[Vec::with_capacity(BOOTSTRAP_RESAMPLES), Vec::new(), Vec::new()]; steps];
    for r in 0..BOOTSTRAP_RESAMPLES {
        let idx = bootstrap_blocks(seed, direct.sizes.len(), r);
        let (d, s) = combine(&direct.resampled_means(&idx), &shifted.resampled_means(&idx));
        for n in 0..steps {
            boot[n][0].push(d[n]);
            boot[n][1].push(s[n]);
            boot[n][2].push(s[n] - d[n]);
        }
    }
    let se = |k: usize| -> Vec<f64> { boot.iter().map(|b| std_dev(&b[k])).collect() };
    let (se_d, se_r, se_diff) = (se(0), se(1), se(2));
    let abs: Vec<f64> = c_direct.iter().map(|c| c.abs()).collect();
    Ok(CorrelationSeries {
        n: (0..=n_max).collect(),
        fit: fit_decay(&abs, &se_d),
        direct: c_direct,
        reduced: c_reduced,
        stderr_direct: se_d,
        stderr_reduced: se_r,
        stderr_difference: se_diff,
        g_mean,
        shift,
        constants_unvalidated: f.holder(&config).is_none() || g.holder(&config).is_none(),
    })
}
