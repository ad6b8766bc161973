use rayon::prelude::*;
use serde::Serialize;

use super::curve::{MeasuredCurve, UnstableCurve};
use super::push::{push_curve, PushSettings};
use crate::error::{Error, Result};
use crate::scenario::ScenarioSequence;

/// Slope pairs closer than this in `r` are ignored by curvature estimates.
pub const CURVATURE_MIN_DR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackSettings {
    pub push: PushSettings,
    /// Stratified sample points on the root curve.
    pub samples: usize,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            push: PushSettings {
                h_max: 5e-3,
                max_dlog_jacobian: 2e-2,
                ..PushSettings::default()
            },
            samples: 2000,
        }
    }
}

/// Statistics of `F_n W` seen through the tracked sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackStep {
    pub n: usize,
    /// `r_{W,n}` per sample: arclength from `F_n x` to the nearer end of its
    /// homogeneous component; zero once the sample fell into a dropped piece.
    pub r: Vec<f64>,
    /// Estimate of `m_W{r_{W,n} < ε}` per entry of the ε grid.
    pub measure_below: Vec<f64>,
    /// Estimate of `Z` for the pushed measure: mass-weighted mean of `1/|component|`.
    pub z_value: f64,
    pub live_components: usize,
    pub dead_samples: usize,
    /// Longest component holding a sample.
    pub max_length: f64,
    pub kappa_hat_max: f64,
    /// Largest `max − min` of `log J_W F_n` within one component.
    pub max_distortion: f64,
    /// Fraction of `W` (by arclength) that maps onto the component holding
    /// the first sample; exactly 1 while that branch has not been cut.
    pub first_sample_share: f64,
    /// Length of the component holding the first sample.
    pub first_sample_length: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackRecord {
    pub root_length: f64,
    pub root_mass: f64,
    pub sample_labels: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Entry `n` describes `F_n W`, starting with `n = 0`.
    pub steps: Vec<TrackStep>,
}

struct Live {
    curve: MeasuredCurve,
    samples: Vec<usize>,
    /// Sample positions in the labels of `curve`.
    labels: Vec<f64>,
    share: f64,
}

/// Pushes the measured curve through maps `first_map, first_map + 1, …` for
/// `n` steps, keeping only components that contain one of the stratified
/// sample points. End-zone measures use the conditional expectation given the
/// sampled component, so each component contributes its exact share.
pub fn track_samples(
    mc: &MeasuredCurve,
    scenario: &ScenarioSequence,
    first_map: usize,
    n: usize,
    epsilons: &[f64],
    settings: &TrackSettings,
) -> Result<TrackRecord> {
    if settings.samples == 0 {
        return Err(Error::ParameterDomain("need at least one sample".into()));
    }
    if first_map == 0 || first_map + n > scenario.len() + 1 {
        return Err(Error::ParameterDomain(format!(
            "maps {first_map}..{} outside scenario of length {}",
            first_map + n,
            scenario.len()
        )));
    }
    let (lo, hi) = mc.curve.label_range;
    let root_length = hi - lo;
    let count = settings.samples;
    let labels: Vec<f64> = (0..count)
        .map(|j| lo + root_length * (j as f64 + 0.5) / count as f64)
        .collect();
    let mut live = vec![Live {
        curve: mc.clone(),
        samples: (0..count).collect(),
        labels: labels.clone(),
        share: 1.0,
    }];
    let mut dead = vec![false; count];
    let mut steps = vec![summarize(0, &live, &dead, epsilons, root_length, mc.mass, 0)];

    for step in 1..=n {
        let k = first_map + step - 1;
        let map = scenario.map(k)?;
        let pushed: Vec<_> = live
            .par_iter()
            .map(|l| push_curve(&l.curve, &map, &settings.push).map_err(|e| e.at_step(k)))
            .collect::<Result<Vec<_>>>()?;
        let mut evaluations = 0;
        let mut next = Vec::new();
        for (l, out) in live.iter().zip(pushed) {
            evaluations += out.evaluations;
            let mut owner: Vec<Option<usize>> = vec![None; l.samples.len()];
            for (i, &x) in l.labels.iter().enumerate() {
                let idx = out.components.partition_point(|c| c.curve.label_range.1 <= x);
                if let Some(c) = out.components.get(idx) {
                    if c.curve.label_range.0 <= x {
                        owner[i] = Some(idx);
                    }
                }
            }
            let mut groups: Vec<(Vec<usize>, Vec<f64>)> = vec![Default::default(); out.components.len()];
            for (i, (&s, &x)) in l.samples.iter().zip(&l.labels).enumerate() {
                match owner[i] {
                    Some(c) => {
                        groups[c].0.push(s);
                        groups[c].1.push(x);
                    }
                    None => dead[s] = true,
                }
            }
            let parent_len = l.curve.curve.label_length();
            for (mut c, (samples, mut xs)) in out.components.into_iter().zip(groups) {
                if samples.is_empty() {
                    continue;
                }
                let share = l.share * (c.curve.label_length() / parent_len);
                let (shift, scale) = c.rebase_labels();
                xs.iter_mut().for_each(|x| *x = (*x - shift) * scale);
                next.push(Live {
                    curve: c,
                    samples,
                    labels: xs,
                    share,
                });
            }
        }
        live = next;
        steps.push(summarize(step, &live, &dead, epsilons, root_length, mc.mass, evaluations));
    }
    Ok(TrackRecord {
        root_length,
        root_mass: mc.mass,
        sample_labels: labels,
        epsilons: epsilons.to_vec(),
        steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    n: usize,
    live: &[Live],
    dead: &[bool],
    epsilons: &[f64],
    root_length: f64,
    root_mass: f64,
    evaluations: usize,
) -> TrackStep {
    let count = dead.len();
    let weight = root_length / count as f64;
    let dead_samples = dead.iter().filter(|&&d| d).count();
    let mut r = vec![0.0; count];
    let mut measure_below = vec![weight * dead_samples as f64; epsilons.len()];
    let mut inv_len_sum = 0.0;
    let mut max_length: f64 = 0.0;
    let mut kappa_hat_max: f64 = 0.0;
    let mut max_distortion: f64 = 0.0;
    let mut first_sample_share = 0.0;
    let mut first_sample_length = 0.0;
    for l in live {
        let curve: &UnstableCurve = &l.curve.curve;
        let arcs = curve.arclengths();
        let total = *arcs.last().unwrap_or(&0.0);
        for (&s, &x) in l.samples.iter().zip(&l.labels) {
            let a = curve.arclength_at_label(&arcs, x);
            r[s] = a.min(total - a).max(0.0);
        }
        let k = l.samples.len() as f64;
        let label_len = curve.label_length();
        for (m, &eps) in measure_below.iter_mut().zip(epsilons) {
            *m += k * weight * curve.end_zone_label_measure(&arcs, eps) / label_len;
        }
        inv_len_sum += k / total;
        max_length = max_length.max(total);
        kappa_hat_max = kappa_hat_max.max(curve.curvature_estimate(CURVATURE_MIN_DR));
        let (jmin, jmax) = curve
            .nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), nd| {
                (a.min(nd.log_jacobian), b.max(nd.log_jacobian))
            });
        max_distortion = max_distortion.max(jmax - jmin);
        if l.samples.contains(&0) {
            first_sample_share = l.share;
            first_sample_length = total;
        }
    }
    TrackStep {
        n,
        r,
        measure_below,
        z_value: root_mass * inv_len_sum / count as f64,
        live_components: live.len(),
        dead_samples,
        max_length,
        kappa_hat_max,
        max_distortion,
        first_sample_share,
        first_sample_length,
        evaluations,
    }
}

/// Table of `m_W{r_{W,n} < ε}` for the given ε grid, with `W` carrying arclength.
pub fn growth_statistics(
    w: &UnstableCurve,
    scenario: &ScenarioSequence,
    n: usize,
    epsilons: &[f64],
    settings: &TrackSettings,
) -> Result<Vec<f64>> {
    let mc = MeasuredCurve::uniform(w.clone(), w.label_length())?;
    let rec = track_samples(&mc, scenario, 1, n, epsilons, settings)?;
    Ok(rec.steps[n].measure_below.clone())
}

/// `log(J_W F_n)` spread along the branch holding the first sample point, per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub lengths: Vec<f64>,
    pub distortion: Vec<f64>,
    /// Smallest `C` with `distortion ≤ C |F_n W|^{1/3}` at every step.
    pub c_fit: f64,
}

/// Follows the branch through the label midpoint of `mc`.
pub fn distortion_check(
    mc: &MeasuredCurve,
    scenario: &ScenarioSequence,
    n: usize,
    push: &PushSettings,
) -> Result<DistortionReport> {
    let settings = TrackSettings { push: *push, samples: 1 };
    let rec = track_samples(mc, scenario, 1, n, &[], &settings)?;
    let mut lengths = Vec::new();
    let mut distortion = Vec::new();
    for st in &rec.steps {
        if st.live_components == 0 {
            break;
        }
        lengths.push(st.first_sample_length);
        distortion.push(st.max_distortion);
    }
    let c_fit = lengths
        .iter()
        .zip(&distortion)
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, d)| d / l.cbrt())
        .fold(0.0, f64::max);
    Ok(DistortionReport {
        lengths,
        distortion,
        c_fit,
    })
}

/// `max_m |F_m W| / |W|^{1/2^m}` over the steps during which `W` is not cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCap {
    pub c_e: f64,
    /// Steps before the first cut (or `n` if none).
    pub uncut_steps: usize,
}

pub fn growth_cap(w: &UnstableCurve, scenario: &ScenarioSequence, n: usize, push: &PushSettings) -> Result<GrowthCap> {
    let mc = MeasuredCurve::uniform(w.clone(), 1.0)?;
    let settings = TrackSettings { push: *push, samples: 1 };
    let rec = track_samples(&mc, scenario, 1, n, &[], &settings)?;
    let len0 = w.length();
    let mut c_e: f64 = 0.0;
    let mut uncut_steps = 0;
    for st in &rec.steps {
        if st.first_sample_share != 1.0 {
            break;
        }
        let exponent = 0.5f64.powi(st.n as i32);
        c_e = c_e.max(st.first_sample_length / len0.powf(exponent));
        uncut_steps = st.n;
    }
    Ok(GrowthCap { c_e, uncut_steps })
}

/// `u^s(x) = c_norm · min_{0≤n≤N} Λ̂ⁿ r_{W,n}(x)` at the stratified sample points.
pub fn stable_size_proxy(
    w: &UnstableCurve,
    scenario: &ScenarioSequence,
    horizon: usize,
    c_norm: f64,
    lambda_hat: f64,
    settings: &TrackSettings,
) -> Result<Vec<f64>> {
    let mc = MeasuredCurve::uniform(w.clone(), w.label_length())?;
    let rec = track_samples(&mc, scenario, 1, horizon, &[], settings)?;
    Ok(stable_proxy_from(&rec, c_norm, lambda_hat))
}

pub fn stable_proxy_from(rec: &TrackRecord, c_norm: f64, lambda_hat: f64) -> Vec<f64> {
    let mut u = vec![f64::INFINITY; rec.sample_labels.len()];
    let mut scale = 1.0;
    for st in &rec.steps {
        for (ui, ri) in u.iter_mut().zip(&st.r) {
            *ui = ui.min(scale * ri);
        }
        scale *= lambda_hat;
    }
    u.iter().map(|v| c_norm * v).collect()
}

/// Fraction of values at or above `threshold`.
pub fn fraction_at_least(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= threshold).count() as f64 / values.len() as f64
}

/// Curvature before one push and of each resulting component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub before: f64,
    pub after: Vec<f64>,
    pub max_after: f64,
}

pub fn curvature_update_check(before: &UnstableCurve, after: &[MeasuredCurve]) -> CurvatureReport {
    let after: Vec<f64> = after.iter().map(|c| c.curve.curvature_estimate(CURVATURE_MIN_DR)).collect();
    CurvatureReport {
        before: before.curvature_estimate(CURVATURE_MIN_DR),
        max_after: after.iter().copied().fold(0.0, f64::max),
        after,
    }
}

/// Envelope `κ̂_n ≤ (C/2)(1 + ϑⁿ κ̂_0)` for a curvature series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureEnvelope {
    pub c_hat: f64,
    pub theta_hat: f64,
}

/// `C` is twice the largest curvature over the second half of the series;
/// `ϑ` is the smallest rate in `[0, 1]` for which the envelope covers the
/// first half as well (1 if none does).
pub fn fit_curvature_envelope(series: &[f64]) -> CurvatureEnvelope {
    if series.is_empty() {
        return CurvatureEnvelope {
            c_hat: 0.0,
            theta_hat: 0.0,
        };
    }
    let tail = &series[series.len() / 2..];
    let c_hat = 2.0 * tail.iter().copied().fold(0.0, f64::max);
    let k0 = series[0];
    let covers = |theta: f64| {
        series
            .iter()
            .enumerate()
            .all(|(n, &k)| k <= 0.5 * c_hat * (1.0 + theta.powi(n as i32) * k0) * (1.0 + 1e-12))
    };
    if covers(0.0) {
        return CurvatureEnvelope { c_hat, theta_hat: 0.0 };
    }
    if !covers(1.0) {
        return CurvatureEnvelope { c_hat, theta_hat: 1.0 };
    }
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if covers(m) {
            b = m;
        } else {
            a = m;
        }
    }
    CurvatureEnvelope { c_hat, theta_hat: b }
}
