use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::tangent::{homogeneity_index, ConeSpec, HomogeneityScheme, Strip};

/// Node of a polyline approximating an unstable curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveNode {
    pub r: f64,
    pub phi: f64,
    /// Tangent slope `dφ/dr` at the node.
    pub slope: f64,
    /// Position of the preimage on the root curve. Starts as root arclength;
    /// see [`MeasuredCurve::rebase_labels`].
    pub label: f64,
    /// `log` of `d(arclength here) / d(label)`; equals `log J_W F_n` until
    /// the labels are rebased, and differences along a curve always do.
    pub log_jacobian: f64,
}

/// Homogeneous unstable curve `φ = φ_W(r)` on one disk, sampled at nodes
/// ordered by label. `r` is monotone along the nodes modulo the perimeter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstableCurve {
    pub disk: usize,
    pub perimeter: f64,
    pub strip: Strip,
    pub nodes: Vec<CurveNode>,
    /// Label interval this curve is the image of.
    pub label_range: (f64, f64),
}

pub(crate) fn wrap_delta(d: f64, period: f64) -> f64 {
    let w = d.rem_euclid(period);
    if w > 0.5 * period {
        w - period
    } else {
        w
    }
}

pub(crate) fn chord(a: &CurveNode, b: &CurveNode, period: f64) -> f64 {
    wrap_delta(b.r - a.r, period).hypot(b.phi - a.phi)
}

impl UnstableCurve {
    /// Straight segment of slope `slope` centered at `(r, phi)` with `nodes`
    /// equally spaced nodes; labels are arclength from its first end.
    pub fn straight(
        config: &Configuration,
        disk: usize,
        center: (f64, f64),
        slope: f64,
        length: f64,
        nodes: usize,
        scheme: &HomogeneityScheme,
    ) -> Result<Self> {
        if !(length > 0.0) || nodes < 2 {
            return Err(Error::ParameterDomain(format!(
                "curve needs positive length and >= 2 nodes (got {length}, {nodes})"
            )));
        }
        let perimeter = config.disk(disk).perimeter();
        let norm = slope.hypot(1.0);
        let (dr, dphi) = (1.0 / norm, slope / norm);
        let nodes: Vec<CurveNode> = (0..nodes)
            .map(|i| {
                let s = length * i as f64 / (nodes - 1) as f64;
                let off = s - 0.5 * length;
                CurveNode {
                    r: (center.0 + off * dr).rem_euclid(perimeter),
                    phi: center.1 + off * dphi,
                    slope,
                    label: s,
                    log_jacobian: 0.0,
                }
            })
            .collect();
        let strip = homogeneity_index(nodes[0].phi, scheme);
        let curve = Self {
            disk,
            perimeter,
            strip,
            nodes,
            label_range: (0.0, length),
        };
        curve.check_homogeneous(scheme)?;
        Ok(curve)
    }

    pub fn check_homogeneous(&self, scheme: &HomogeneityScheme) -> Result<()> {
        for n in &self.nodes {
            if n.phi.abs() >= std::f64::consts::FRAC_PI_2 || homogeneity_index(n.phi, scheme) != self.strip {
                return Err(Error::ParameterDomain(format!(
                    "curve node at phi = {} leaves strip {:?}",
                    n.phi, self.strip
                )));
            }
        }
        Ok(())
    }

    /// Polyline length.
    pub fn length(&self) -> f64 {
        self.nodes.windows(2).map(|w| chord(&w[0], &w[1], self.perimeter)).sum()
    }

    pub fn label_length(&self) -> f64 {
        self.label_range.1 - self.label_range.0
    }

    /// `sup |d²φ/dr²|` estimated from differences of node slopes; pairs closer
    /// than `min_dr` in `r` are skipped as numerically meaningless.
    pub fn curvature_estimate(&self, min_dr: f64) -> f64 {
        self.nodes
            .windows(2)
            .filter_map(|w| {
                let dr = wrap_delta(w[1].r - w[0].r, self.perimeter).abs();
                (dr >= min_dr).then(|| (w[1].slope - w[0].slope).abs() / dr)
            })
            .fold(0.0, f64::max)
    }

    /// Every node slope and every chord slope lies in the unstable cone, and
    /// `r` moves in one direction.
    pub fn cone_compliant(&self, cone: &ConeSpec) -> bool {
        if !self.nodes.iter().all(|n| cone.contains_unstable(n.slope)) {
            return false;
        }
        let mut sign = 0.0;
        for w in self.nodes.windows(2) {
            let dr = wrap_delta(w[1].r - w[0].r, self.perimeter);
            if dr == 0.0 {
                continue;
            }
            if sign == 0.0 {
                sign = dr.signum();
            } else if dr.signum() != sign {
                return false;
            }
            if !cone.contains_unstable((w[1].phi - w[0].phi) / dr) {
                return false;
            }
        }
        true
    }

    /// Cumulative polyline arclength at each node.
    pub fn arclengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(0.0);
        for w in self.nodes.windows(2) {
            acc += chord(&w[0], &w[1], self.perimeter);
            out.push(acc);
        }
        out
    }

    /// Arclength from the first node to the point with root label `label`,
    /// interpolated linearly between nodes and clamped to the curve.
    pub fn arclength_at_label(&self, arclengths: &[f64], label: f64) -> f64 {
        let idx = self.nodes.partition_point(|n| n.label <= label);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.nodes.len() {
            return *arclengths.last().unwrap_or(&0.0);
        }
        let (a, b) = (&self.nodes[idx - 1], &self.nodes[idx]);
        let t = (label - a.label) / (b.label - a.label);
        arclengths[idx - 1] + t * (arclengths[idx] - arclengths[idx - 1])
    }

    /// Label measure of the points within arclength `eps` of either end.
    pub fn end_zone_label_measure(&self, arclengths: &[f64], eps: f64) -> f64 {
        let total = *arclengths.last().unwrap_or(&0.0);
        let (lo, hi) = self.label_range;
        if 2.0 * eps >= total {
            return hi - lo;
        }
        let s1 = self.label_at_arclength(arclengths, eps);
        let s2 = self.label_at_arclength(arclengths, total - eps);
        (s1 - lo) + (hi - s2)
    }

    fn label_at_arclength(&self, arclengths: &[f64], a: f64) -> f64 {
        let idx = arclengths.partition_point(|&x| x <= a);
        if idx == 0 {
            return self.nodes[0].label;
        }
        if idx >= arclengths.len() {
            return self.nodes[self.nodes.len() - 1].label;
        }
        let (la, lb) = (self.nodes[idx - 1].label, self.nodes[idx].label);
        let (aa, ab) = (arclengths[idx - 1], arclengths[idx]);
        la + (lb - la) * (a - aa) / (ab - aa)
    }
}

/// Unstable curve carrying the measure `ρ dm_W`.
///
/// The density is stored through its pull-back `ρ₀` to the root curve
/// (density against label measure), which is linear in the label between
/// nodes. The density against arclength on this curve is `ρ₀ / J`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredCurve {
    pub curve: UnstableCurve,
    pub label_density: Vec<f64>,
    pub mass: f64,
}

impl MeasuredCurve {
    /// Density `f(label)` against label measure, scaled to total mass `mass`
    /// if given.
    pub fn with_density(curve: UnstableCurve, f: impl Fn(f64) -> f64, mass: Option<f64>) -> Result<Self> {
        let mut label_density: Vec<f64> = curve.nodes.iter().map(|n| f(n.label)).collect();
        if label_density.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::ParameterDomain("density must be positive and finite".into()));
        }
        let raw = label_mass(&curve, &label_density);
        if let Some(m) = mass {
            let scale = m / raw;
            label_density.iter_mut().for_each(|v| *v *= scale);
        }
        let mass = label_mass(&curve, &label_density);
        Ok(Self {
            curve,
            label_density,
            mass,
        })
    }

    pub fn uniform(curve: UnstableCurve, mass: f64) -> Result<Self> {
        Self::with_density(curve, |_| 1.0, Some(mass))
    }

    /// Moves the label range to start at 0 and rescales it by a power of two
    /// near `1/range`, adjusting the label density so masses are unchanged.
    /// Returns `(shift, scale)` of the applied map `λ ↦ (λ − shift)·scale`.
    ///
    /// Labels inherited from the root shrink geometrically under expansion;
    /// without rebasing they stop resolving nodes after a few dozen steps.
    pub fn rebase_labels(&mut self) -> (f64, f64) {
        let (lo, hi) = self.curve.label_range;
        let e = -(hi - lo).log2().floor();
        let scale = 2f64.powi(e as i32);
        let log_scale = scale.ln();
        for n in &mut self.curve.nodes {
            n.label = (n.label - lo) * scale;
            n.log_jacobian -= log_scale;
        }
        self.curve.label_range = (0.0, (hi - lo) * scale);
        for v in &mut self.label_density {
            *v /= scale;
        }
        (lo, scale)
    }

    /// `log ρ` against arclength on this curve, per node.
    pub fn log_density(&self) -> Vec<f64> {
        self.curve
            .nodes
            .iter()
            .zip(&self.label_density)
            .map(|(n, r)| r.ln() - n.log_jacobian)
            .collect()
    }

    /// Trapezoid rule for `∫ ρ dm_W` over the polyline.
    pub fn trapezoid_mass(&self) -> f64 {
        let rho: Vec<f64> = self.log_density().iter().map(|l| l.exp()).collect();
        self.curve
            .nodes
            .windows(2)
            .enumerate()
            .map(|(i, w)| 0.5 * (rho[i] + rho[i + 1]) * chord(&w[0], &w[1], self.curve.perimeter))
            .sum()
    }
}

/// `∫ ρ₀` over the label range: trapezoids between nodes, constant beyond
/// the end nodes. Splitting a segment at its label midpoint is exact.
pub(crate) fn label_mass(curve: &UnstableCurve, rho0: &[f64]) -> f64 {
    let n = &curve.nodes;
    let (lo, hi) = curve.label_range;
    let mut m = rho0[0] * (n[0].label - lo) + rho0[n.len() - 1] * (hi - n[n.len() - 1].label);
    for i in 0..n.len() - 1 {
        m += 0.5 * (rho0[i] + rho0[i + 1]) * (n[i + 1].label - n[i].label);
    }
    m
}

/// Countable family `Σ a_j ν_j` of measured curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CurveFamily {
    pub components: Vec<(f64, MeasuredCurve)>,
}

impl CurveFamily {
    pub fn new(components: Vec<(f64, MeasuredCurve)>) -> Result<Self> {
        if components.iter().any(|(a, _)| !(*a >= 0.0)) {
            return Err(Error::ParameterDomain("family weights must be >= 0".into()));
        }
        Ok(Self { components })
    }

    pub fn total_mass(&self) -> f64 {
        self.components.iter().map(|(a, c)| a * c.mass).sum()
    }

    /// `Z = Σ a_j ν_j(M) / |W_j|`.
    pub fn z_value(&self) -> f64 {
        z_value(self.components.iter().map(|(a, c)| (*a, c.mass, c.curve.length())))
    }

    /// `Z < c_p · total mass`.
    pub fn proper(&self, c_p: f64) -> bool {
        self.z_value() < c_p * self.total_mass()
    }

    /// Fraction of the mass carried by curves of length at least `1/(2 c_p)`.
    pub fn long_curve_fraction(&self, c_p: f64) -> f64 {
        let cut = 0.5 / c_p;
        let long: f64 = self
            .components
            .iter()
            .filter(|(_, c)| c.curve.length() >= cut)
            .map(|(a, c)| a * c.mass)
            .sum();
        long / self.total_mass()
    }
}

/// `Σ weight · mass / length` over `(weight, mass, length)` triples.
pub fn z_value(items: impl IntoIterator<Item = (f64, f64, f64)>) -> f64 {
    items.into_iter().map(|(a, m, l)| a * m / l).sum()
}
