//! Collision map between consecutive configurations.
//!
//! Chart: on disk `i` with center `c`, radius `R` and marker angle `α`, the
//! clockwise arclength `r` sits at polar angle `θ = α − r/R`. The outgoing
//! velocity is `cos φ · n + sin φ · t`, where `n` is the outward radial of the
//! disk (pointing into the table) and `t = (sin θ, −cos θ)` is the clockwise
//! tangent. Positive `φ` therefore leans towards increasing `r`; with this
//! orientation unstable curves have positive slopes `dφ/dr`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{admissibility, Configuration, HorizonSpec};
use crate::scenario::ScenarioSequence;
use crate::vec2::Vec2;

/// Collisions closer than this to tangency are flagged as grazing.
pub const GRAZING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub disk: usize,
    pub r: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub fn new(disk: usize, r: f64, phi: f64) -> Self {
        Self { disk, r, phi }
    }

    /// Time-reversal involution `(r, φ) ↦ (r, −φ)`.
    pub fn reversed(self) -> Self {
        Self {
            phi: -self.phi,
            ..self
        }
    }

    /// `π/2 − |φ|`.
    pub fn tangential_margin(&self) -> f64 {
        FRAC_PI_2 - self.phi.abs()
    }
}

/// Boundary point and unit outgoing velocity for `x` in the chart of `config`.
pub fn chart_to_plane(x: PhasePoint, config: &Configuration) -> (Vec2, Vec2) {
    let d = config.disk(x.disk);
    let theta = d.marker_angle - x.r / d.radius;
    let n = Vec2::from_angle(theta);
    let t = Vec2::new(n.y, -n.x);
    let (s, c) = x.phi.sin_cos();
    (d.center + n * d.radius, n * c + t * s)
}

/// Chart coordinates of the boundary point `q` of disk `disk` with velocity `v`.
/// `q` may be any lift of the point; the nearest copy of the disk is used.
pub fn plane_to_chart(disk: usize, q: Vec2, v: Vec2, config: &Configuration) -> PhasePoint {
    let d = config.disk(disk);
    let w = (q - d.center).min_image();
    chart_from_normal(disk, w.normalized(), v, config)
}

fn chart_from_normal(disk: usize, n: Vec2, v: Vec2, config: &Configuration) -> PhasePoint {
    let d = config.disk(disk);
    let theta = n.angle();
    let t = Vec2::new(n.y, -n.x);
    let perimeter = d.perimeter();
    let mut r = d.radius * (d.marker_angle - theta).rem_euclid(TAU);
    if r >= perimeter {
        r -= perimeter;
    }
    PhasePoint {
        disk,
        r,
        phi: v.dot(t).atan2(v.dot(n)),
    }
}

/// First entry of a ray into a scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeFlightHit {
    pub disk: usize,
    pub time: f64,
    /// Hit point on the unfolded plane.
    pub point: Vec2,
    /// Outward unit normal of the scatterer at the hit point.
    pub normal: Vec2,
    /// Angle between the ray and the tangent line at the hit point, in `[0, π/2]`.
    pub incidence_angle: f64,
}

/// First entry of `q + t v` into a scatterer of `config` with `floor < t <= max_len`.
///
/// Only entering intersections count, so a ray starting on a boundary and
/// pointing away from it does not see that boundary. The lattice walk always
/// starts at `t = 0`, which makes the answer independent of `floor` as long as
/// no intersection lies between two floors.
pub fn trace_free_flight(
    q: Vec2,
    v: Vec2,
    config: &Configuration,
    floor: f64,
    max_len: f64,
) -> Result<FreeFlightHit> {
    let mut best: Option<(f64, usize, Vec2)> = None;
    let candidates = config.cell_candidates();
    let found = config.walk_cells(q, v, max_len, |cell, _, t_exit| {
        for c in candidates {
            let center = c.center_in(cell);
            let w = q - center;
            let b = w.dot(v);
            if b >= 0.0 {
                continue;
            }
            let cc = (w.norm_sq() - c.radius * c.radius).max(0.0);
            let disc = b * b - cc;
            if disc < 0.0 {
                continue;
            }
            // small root in the cancellation-free form
            let t1 = cc / (-b + disc.sqrt());
            if t1 > floor && t1 <= max_len && best.is_none_or(|(t, _, _)| t1 < t) {
                best = Some((t1, c.disk, center));
            }
        }
        match best {
            Some(hit) if hit.0 <= t_exit => ControlFlow::Break(hit),
            _ => ControlFlow::Continue(()),
        }
    });
    let Some((time, disk, center)) = found.or(best) else {
        return Err(Error::NoCollisionWithinHorizon {
            origin: q,
            direction: v,
            horizon: max_len,
        });
    };
    let point = q + v * time;
    let normal = (point - center).normalized();
    let incidence_angle = (-v.dot(normal)).clamp(0.0, 1.0).asin();
    Ok(FreeFlightHit {
        disk,
        time,
        point,
        normal,
        incidence_angle,
    })
}

/// Time for a ray leaving `∂B` at angle `φ` to leave the `β`-neighborhood of `B`.
pub fn buffer_exit_time(radius: f64, phi: f64, beta: f64) -> f64 {
    let b = radius * phi.cos().max(0.0);
    let gap = beta * (2.0 * radius + beta);
    gap / (b + (b * b + gap).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionRecord {
    pub image: PhasePoint,
    pub flight_time: f64,
    pub cos_phi_out: f64,
    pub tangential_margin: f64,
    pub source_exit_time: f64,
    pub grazing: bool,
}

/// The collision map `F_{K′,K}` for one admissible pair.
#[derive(Debug, Clone, Copy)]
pub struct BilliardMap<'a> {
    source: &'a Configuration,
    target: &'a Configuration,
    beta: f64,
    max_flight: f64,
}

impl<'a> BilliardMap<'a> {
    /// Checks admissibility of the pair; `horizon.t` caps free flights.
    pub fn new(
        source: &'a Configuration,
        target: &'a Configuration,
        beta: f64,
        horizon: HorizonSpec,
    ) -> Result<Self> {
        horizon.validate()?;
        let report = admissibility(source, target, beta, horizon)?;
        if !report.admissible {
            return Err(Error::NotAdmissible {
                step: 0,
                reason: format!(
                    "excursion {:.3e} vs beta {:.3e}, escape time {:.4} vs tau_min - beta {:.4}",
                    report.max_excursion,
                    beta,
                    report.escape_time,
                    report.tau_min - beta
                ),
            });
        }
        Ok(Self::new_unchecked(source, target, beta, horizon.t))
    }

    pub(crate) fn new_unchecked(
        source: &'a Configuration,
        target: &'a Configuration,
        beta: f64,
        max_flight: f64,
    ) -> Self {
        Self {
            source,
            target,
            beta,
            max_flight,
        }
    }

    pub fn source(&self) -> &'a Configuration {
        self.source
    }

    pub fn target(&self) -> &'a Configuration {
        self.target
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_flight(&self) -> f64 {
        self.max_flight
    }

    pub fn step(&self, x: PhasePoint) -> Result<CollisionRecord> {
        let exit = buffer_exit_time(self.source.disk(x.disk).radius, x.phi, self.beta);
        self.step_with_floor(x, exit)
    }

    /// Like [`step`](Self::step) but with the configuration swapped at `floor`
    /// instead of at the buffer exit time.
    pub fn step_with_floor(&self, x: PhasePoint, floor: f64) -> Result<CollisionRecord> {
        let source_exit_time = buffer_exit_time(self.source.disk(x.disk).radius, x.phi, self.beta);
        let (q, v) = chart_to_plane(x, self.source);
        let hit = trace_free_flight(q, v, self.target, floor, self.max_flight)?;
        let n = hit.normal;
        let v_out = v - n * (2.0 * v.dot(n));
        let image = chart_from_normal(hit.disk, n, v_out, self.target);
        let tangential_margin = image.tangential_margin();
        Ok(CollisionRecord {
            image,
            flight_time: hit.time,
            cos_phi_out: image.phi.cos(),
            tangential_margin,
            source_exit_time,
            grazing: tangential_margin < GRAZING_TOLERANCE,
        })
    }
}

/// One application of `F_{K′,K}`; validates admissibility on every call.
pub fn billiard_step(
    x: PhasePoint,
    source: &Configuration,
    target: &Configuration,
    beta: f64,
    horizon: HorizonSpec,
) -> Result<CollisionRecord> {
    BilliardMap::new(source, target, beta, horizon)?.step(x)
}

/// Applies `F_1, …, F_n` of the scenario to `x`.
pub fn evolve_sequence(
    x: PhasePoint,
    scenario: &ScenarioSequence,
    n: usize,
) -> Result<Vec<CollisionRecord>> {
    let mut out = Vec::with_capacity(n);
    let mut cur = x;
    for k in 1..=n {
        let rec = scenario.map(k)?.step(cur).map_err(|e| e.at_step(k))?;
        cur = rec.image;
        out.push(rec);
    }
    Ok(out)
}
