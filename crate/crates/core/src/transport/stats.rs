use rayon::prelude::*;
use serde::Serialize;

use super::curve::{wrap_delta, CurveFamily, MeasuredCurve};
use super::push::{push_curve, PushSettings};
use crate::billiard::PhasePoint;
use crate::error::{Error, Result};
use crate::scenario::ScenarioSequence;
use crate::tangent::{homogeneity_index, HomogeneityScheme, Strip};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    /// `θ = Λ̂^{−1/6}`.
    pub theta: f64,
    /// `max |Δ log ρ| θ^{−s}` over pairs that separated within the horizon.
    pub c_hat: f64,
    /// Geometric-mean fit of `|Δ log ρ| θ^{−s}` over the same pairs.
    pub c_ls: f64,
    /// `max |Δ log ρ| θ^{−n_max}` over pairs that never separated; a lower
    /// bound for their constant.
    pub c_saturated: f64,
    pub pairs: usize,
    pub saturated_pairs: usize,
    /// `max d(x, y) Λ̂^{s(x,y)}` over separated pairs.
    pub c_s: f64,
}

/// Fits the regularity constant of the density of `mc` against separation
/// times under maps `first_map, first_map + 1, …`. At most `max_nodes`
/// evenly spaced nodes enter the pair set.
pub fn regularity_constant(
    mc: &MeasuredCurve,
    scenario: &ScenarioSequence,
    first_map: usize,
    n_max: usize,
    lambda_hat: f64,
    max_nodes: usize,
    scheme: &HomogeneityScheme,
) -> Result<RegularityReport> {
    if !(lambda_hat > 1.0) {
        return Err(Error::ParameterDomain(format!("lambda_hat = {lambda_hat} must exceed 1")));
    }
    let nodes = &mc.curve.nodes;
    let stride = nodes.len().div_ceil(max_nodes.max(2));
    let picked: Vec<usize> = (0..nodes.len()).step_by(stride.max(1)).collect();
    let log_rho = mc.log_density();

    // itinerary: (disk, strip) at each iterate 0..n_max
    let itineraries: Vec<Vec<(usize, Strip)>> = picked
        .par_iter()
        .map(|&i| {
            let mut x = PhasePoint::new(mc.curve.disk, nodes[i].r, nodes[i].phi);
            let mut it = Vec::with_capacity(n_max);
            for n in 0..n_max {
                if n > 0 {
                    let k = first_map + n - 1;
                    x = scenario.map(k)?.step(x).map_err(|e| e.at_step(k))?.image;
                }
                it.push((x.disk, homogeneity_index(x.phi, scheme)));
            }
            Ok(it)
        })
        .collect::<Result<_>>()?;

    let theta = lambda_hat.powf(-1.0 / 6.0);
    let mut rep = RegularityReport {
        theta,
        c_hat: 0.0,
        c_ls: 0.0,
        c_saturated: 0.0,
        pairs: 0,
        saturated_pairs: 0,
        c_s: 0.0,
    };
    let mut log_sum = 0.0;
    let mut log_count = 0usize;
    for a in 0..picked.len() {
        for b in a + 1..picked.len() {
            let (ia, ib) = (picked[a], picked[b]);
            let sep = itineraries[a]
                .iter()
                .zip(&itineraries[b])
                .position(|(x, y)| x.0 != y.0 || !x.1.same_as(&y.1));
            let diff = (log_rho[ia] - log_rho[ib]).abs();
            rep.pairs += 1;
            match sep {
                Some(s) => {
                    let c = diff * theta.powi(-(s as i32));
                    rep.c_hat = rep.c_hat.max(c);
                    if c > 0.0 {
                        log_sum += c.ln();
                        log_count += 1;
                    }
                    let d = wrap_delta(nodes[ib].r - nodes[ia].r, mc.curve.perimeter).hypot(nodes[ib].phi - nodes[ia].phi);
                    rep.c_s = rep.c_s.max(d * lambda_hat.powi(s as i32));
                }
                None => {
                    rep.saturated_pairs += 1;
                    rep.c_saturated = rep.c_saturated.max(diff * theta.powi(-(n_max as i32)));
                }
            }
        }
    }
    rep.c_ls = if log_count > 0 {
        (log_sum / log_count as f64).exp()
    } else {
        0.0
    };
    Ok(rep)
}

/// Per-step state of a fully pushed family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyStep {
    pub n: usize,
    pub components: usize,
    pub mass: f64,
    pub dropped_mass: f64,
    pub z_per_mass: f64,
}

/// Pushes every component of the family through maps `1..=n` and records
/// `Z_n / mass` after each step.
pub fn z_series(
    family: &CurveFamily,
    scenario: &ScenarioSequence,
    n: usize,
    push: &PushSettings,
) -> Result<Vec<FamilyStep>> {
    let mut fam = family.clone();
    let mut dropped_mass = 0.0;
    let mut out = vec![FamilyStep {
        n: 0,
        components: fam.components.len(),
        mass: fam.total_mass(),
        dropped_mass,
        z_per_mass: fam.z_value() / fam.total_mass(),
    }];
    for k in 1..=n {
        let map = scenario.map(k)?;
        let pushed: Vec<_> = fam
            .components
            .par_iter()
            .map(|(a, c)| push_curve(c, &map, push).map(|o| (*a, o)).map_err(|e| e.at_step(k)))
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for (a, o) in pushed {
            dropped_mass += a * o.dropped_mass();
            next.extend(o.components.into_iter().map(|c| (a, c)));
        }
        fam = CurveFamily { components: next };
        out.push(FamilyStep {
            n: k,
            components: fam.components.len(),
            mass: fam.total_mass(),
            dropped_mass,
            z_per_mass: fam.z_value() / fam.total_mass(),
        });
    }
    Ok(out)
}
