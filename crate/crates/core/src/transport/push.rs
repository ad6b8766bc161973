use serde::Serialize;

use super::curve::{chord, label_mass, wrap_delta, CurveNode, MeasuredCurve, UnstableCurve};
use crate::billiard::{BilliardMap, PhasePoint};
use crate::error::{Error, Result};
use crate::tangent::{dxf, homogeneity_index, HomogeneityScheme, Strip};

/// Refinement thresholds for [`push_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PushSettings {
    /// Longest allowed image chord.
    pub h_max: f64,
    /// Largest allowed change of tangent angle between image nodes.
    pub max_turn: f64,
    /// Largest allowed change of `log J` between image nodes.
    pub max_dlog_jacobian: f64,
    /// Preimage chord at which bisection of a discontinuity stops.
    pub min_segment: f64,
    /// Image components shorter than this are dropped.
    pub min_component: f64,
    pub scheme: HomogeneityScheme,
}

impl Default for PushSettings {
    fn default() -> Self {
        Self {
            h_max: 1e-3,
            max_turn: 1e-2,
            max_dlog_jacobian: 1e-3,
            min_segment: 1e-12,
            min_component: 1e-10,
            scheme: HomogeneityScheme::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DropReason {
    Short,
    NearTangential,
}

/// Image piece discarded by [`push_curve`], with the mass it carried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DroppedPiece {
    pub label_range: (f64, f64),
    pub mass: f64,
    pub length: f64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushOutcome {
    /// Homogeneous image components in label order.
    pub components: Vec<MeasuredCurve>,
    pub dropped: Vec<DroppedPiece>,
    /// Map evaluations spent, including refinement.
    pub evaluations: usize,
}

impl PushOutcome {
    pub fn kept_mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped.iter().map(|d| d.mass).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Pushed {
    pre: CurveNode,
    pre_rho: f64,
    image: CurveNode,
    disk: usize,
    strip: Strip,
    /// Step expansion `|D_xF w|` along the preimage tangent.
    step_jacobian: f64,
}

struct Pusher<'m, 'a> {
    map: &'m BilliardMap<'a>,
    settings: PushSettings,
    pre_perimeter: f64,
    nodes: Vec<Pushed>,
    cuts: Vec<(usize, f64)>,
    evaluations: usize,
}

impl Pusher<'_, '_> {
    fn push_node(&mut self, pre_disk: usize, pre: CurveNode, pre_rho: f64) -> Result<Pushed> {
        self.evaluations += 1;
        let x = PhasePoint::new(pre_disk, pre.r, pre.phi);
        let rec = self.map.step(x)?;
        let disk = rec.image.disk;
        let kappa = self.map.source().disk(pre_disk).curvature();
        let kappa_out = self.map.target().disk(disk).curvature();
        let strip = homogeneity_index(rec.image.phi, &self.settings.scheme);
        let w = {
            let n = pre.slope.hypot(1.0);
            [1.0 / n, pre.slope / n]
        };
        let (slope, step_jacobian) = match dxf(x, &rec, kappa, kappa_out) {
            Ok(m) => {
                let v = m.apply(w);
                (v[1] / v[0], v[0].hypot(v[1]))
            }
            // exactly tangential image: it lands in the near-tangential strip and gets dropped
            Err(Error::SingularCollision { .. }) => (f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e),
        };
        let strip = if step_jacobian.is_finite() {
            strip
        } else {
            Strip::NearTangential(if rec.image.phi < 0.0 { -1 } else { 1 })
        };
        Ok(Pushed {
            pre,
            pre_rho,
            image: CurveNode {
                r: rec.image.r,
                phi: rec.image.phi,
                slope,
                label: pre.label,
                log_jacobian: pre.log_jacobian + step_jacobian.ln(),
            },
            disk,
            strip,
            step_jacobian,
        })
    }

    fn target_perimeter(&self, disk: usize) -> f64 {
        self.map.target().disk(disk).perimeter()
    }

    fn smooth_enough(&self, a: &Pushed, b: &Pushed) -> bool {
        let s = &self.settings;
        a.disk == b.disk
            && a.strip == b.strip
            && a.step_jacobian.is_finite()
            && b.step_jacobian.is_finite()
            && chord(&a.image, &b.image, self.target_perimeter(a.disk)) <= s.h_max
            && (a.image.slope.atan() - b.image.slope.atan()).abs() <= s.max_turn
            && (a.image.log_jacobian - b.image.log_jacobian).abs() <= s.max_dlog_jacobian
    }

    /// Image points `a`, `b` are images of adjacent preimage nodes that have
    /// been bisected down to `min_segment`: decide whether the map is
    /// continuous between them.
    fn continuous(&self, a: &Pushed, b: &Pushed, pre_chord: f64) -> bool {
        if a.disk != b.disk || a.strip != b.strip || !a.step_jacobian.is_finite() || !b.step_jacobian.is_finite() {
            return false;
        }
        let j = a.step_jacobian.max(b.step_jacobian);
        chord(&a.image, &b.image, self.target_perimeter(a.disk)) <= 10.0 * j * pre_chord + 1e-9
    }

    /// Hermite midpoint of the preimage segment between `a` and `b`.
    fn midpoint(&self, a: &Pushed, b: &Pushed) -> (CurveNode, f64) {
        let (pa, pb) = (&a.pre, &b.pre);
        let dr = wrap_delta(pb.r - pa.r, self.pre_perimeter);
        let dphi = pb.phi - pa.phi;
        let len = dr.hypot(dphi);
        let sign = if dr < 0.0 { -1.0 } else { 1.0 };
        let unit = |slope: f64| {
            let n = slope.hypot(1.0);
            [sign / n, sign * slope / n]
        };
        let (ta, tb) = (unit(pa.slope), unit(pb.slope));
        let r = pa.r + 0.5 * dr + 0.125 * len * (ta[0] - tb[0]);
        let phi = pa.phi + 0.5 * dphi + 0.125 * len * (ta[1] - tb[1]);
        let dr_mid = 1.5 * dr - 0.25 * len * (ta[0] + tb[0]);
        let dphi_mid = 1.5 * dphi - 0.25 * len * (ta[1] + tb[1]);
        let slope = if dr_mid != 0.0 {
            dphi_mid / dr_mid
        } else {
            0.5 * (pa.slope + pb.slope)
        };
        (
            CurveNode {
                r: r.rem_euclid(self.pre_perimeter),
                phi,
                slope,
                label: 0.5 * (pa.label + pb.label),
                log_jacobian: 0.5 * (pa.log_jacobian + pb.log_jacobian),
            },
            0.5 * (a.pre_rho + b.pre_rho),
        )
    }

    /// Appends `b` after the last emitted node, refining the segment first.
    fn refine(&mut self, pre_disk: usize, b: Pushed, depth: u32) -> Result<()> {
        let a = *self.nodes.last().expect("refine after first node");
        if self.smooth_enough(&a, &b) {
            self.nodes.push(b);
            return Ok(());
        }
        let pre_chord = chord(&a.pre, &b.pre, self.pre_perimeter);
        if pre_chord > self.settings.min_segment && depth < 80 {
            let (m, rho) = self.midpoint(&a, &b);
            let pm = self.push_node(pre_disk, m, rho)?;
            self.refine(pre_disk, pm, depth + 1)?;
            return self.refine(pre_disk, b, depth + 1);
        }
        if !self.continuous(&a, &b, pre_chord) {
            self.cuts.push((self.nodes.len(), 0.5 * (a.pre.label + b.pre.label)));
        }
        self.nodes.push(b);
        Ok(())
    }
}

/// Pushes the measured curve one step through `map`, splitting the image into
/// homogeneous components. Preimage nodes are bisected until every image
/// segment meets the thresholds in `settings` or is shorter than
/// `min_segment` in the preimage; in the latter case a jump of disk, strip or
/// position marks a cut at the label midpoint.
pub fn push_curve(mc: &MeasuredCurve, map: &BilliardMap<'_>, settings: &PushSettings) -> Result<PushOutcome> {
    let curve = &mc.curve;
    if curve.nodes.len() < 2 {
        return Err(Error::ParameterDomain("curve needs at least two nodes".into()));
    }
    let mut p = Pusher {
        map,
        settings: *settings,
        pre_perimeter: curve.perimeter,
        nodes: Vec::with_capacity(curve.nodes.len() * 2),
        cuts: Vec::new(),
        evaluations: 0,
    };
    let first = p.push_node(curve.disk, curve.nodes[0], mc.label_density[0])?;
    p.nodes.push(first);
    for (node, &rho) in curve.nodes.iter().zip(&mc.label_density).skip(1) {
        let b = p.push_node(curve.disk, *node, rho)?;
        p.refine(curve.disk, b, 0)?;
    }

    let mut components = Vec::new();
    let mut dropped = Vec::new();
    let mut bounds: Vec<(usize, f64)> = vec![(0, curve.label_range.0)];
    bounds.extend(p.cuts.iter().copied());
    bounds.push((p.nodes.len(), curve.label_range.1));
    for w in bounds.windows(2) {
        let ((i0, l0), (i1, l1)) = (w[0], w[1]);
        let piece = &p.nodes[i0..i1];
        let disk = piece[0].disk;
        let comp_curve = UnstableCurve {
            disk,
            perimeter: p.target_perimeter(disk),
            strip: piece[0].strip,
            nodes: piece.iter().map(|n| n.image).collect(),
            label_range: (l0, l1),
        };
        let rho: Vec<f64> = piece.iter().map(|n| n.pre_rho).collect();
        let mass = label_mass(&comp_curve, &rho);
        let length = if piece.iter().all(|n| n.step_jacobian.is_finite()) {
            comp_curve.length()
        } else {
            0.0
        };
        let reason = match piece[0].strip {
            Strip::NearTangential(_) => Some(DropReason::NearTangential),
            _ if length < settings.min_component => Some(DropReason::Short),
            _ => None,
        };
        match reason {
            Some(reason) => dropped.push(DroppedPiece {
                label_range: (l0, l1),
                mass,
                length,
                reason,
            }),
            None => components.push(MeasuredCurve {
                curve: comp_curve,
                label_density: rho,
                mass,
            }),
        }
    }
    Ok(PushOutcome {
        components,
        dropped,
        evaluations: p.evaluations,
    })
}
