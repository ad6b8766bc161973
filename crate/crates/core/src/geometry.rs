//! Scatterer configurations on the unit torus and the geometric quantities
//! that gate the dynamics: minimal free path, escape time from the buffer
//! zone, the finite-horizon condition and admissibility of configuration pairs.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::{wrap_unit, Vec2};

/// Circular scatterer. The marked point sits at polar angle `marker_angle`
/// and is the origin of the clockwise arclength coordinate on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec2,
    pub radius: f64,
    pub marker_angle: f64,
}

impl Disk {
    /// Builds a disk with its center reduced to `[0,1)²` and marker to `[0, 2π)`.
    pub fn new(center: Vec2, radius: f64, marker_angle: f64) -> Self {
        Self {
            center: center.wrap_unit(),
            radius,
            marker_angle: normalize_angle(marker_angle),
        }
    }

    #[inline]
    pub fn curvature(&self) -> f64 {
        1.0 / self.radius
    }

    #[inline]
    pub fn perimeter(&self) -> f64 {
        TAU * self.radius
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Copy of a disk translated by a lattice vector, stored relative to the unit cell.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LiftedDisk {
    pub disk: usize,
    pub base: Vec2,
    pub offset: Vec2,
    pub radius: f64,
}

impl LiftedDisk {
    /// Center of this copy in the cell with integer corner `cell`. The integer
    /// part is summed first so every cell reproduces the same bits.
    #[inline]
    pub fn center_in(&self, cell: Vec2) -> Vec2 {
        self.base + (self.offset + cell)
    }
}

/// Ordered placement of disks on the torus.
#[derive(Debug, Clone)]
pub struct Configuration {
    disks: Vec<Disk>,
    label: String,
    tau_min: f64,
    // lifted copies meeting the closed unit cell; a ray in cell (i, j) tests these shifted by (i, j)
    cell_candidates: Vec<LiftedDisk>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.disks == other.disks
    }
}

impl Configuration {
    /// Validates radii and pairwise disjointness of all lifted copies.
    pub fn new(disks: Vec<Disk>, label: impl Into<String>) -> Result<Self> {
        if disks.is_empty() {
            return Err(Error::InvalidDisk {
                index: 0,
                reason: "configuration has no disks".into(),
            });
        }
        let disks: Vec<Disk> = disks
            .into_iter()
            .map(|d| Disk::new(d.center, d.radius, d.marker_angle))
            .collect();
        for (index, d) in disks.iter().enumerate() {
            if !(d.radius.is_finite() && d.radius > 0.0) {
                return Err(Error::InvalidDisk {
                    index,
                    reason: format!("radius {} must be positive", d.radius),
                });
            }
            if !(d.center.x.is_finite() && d.center.y.is_finite() && d.marker_angle.is_finite()) {
                return Err(Error::InvalidDisk {
                    index,
                    reason: "non-finite coordinates".into(),
                });
            }
        }
        let tau_min = min_gap(&disks)?;
        let cell_candidates = build_cell_candidates(&disks);
        Ok(Self {
            disks,
            label: label.into(),
            tau_min,
            cell_candidates,
        })
    }

    pub fn disks(&self) -> &[Disk] {
        &self.disks
    }

    pub fn disk(&self, i: usize) -> &Disk {
        &self.disks[i]
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Cached minimal free path; see [`tau_min`].
    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn kappa_bounds(&self) -> (f64, f64) {
        self.disks.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d.curvature()), hi.max(d.curvature()))
        })
    }

    /// Same configuration with every center shifted by `delta`.
    pub fn translated(&self, delta: Vec2) -> Result<Self> {
        let disks = self
            .disks
            .iter()
            .map(|d| Disk::new(d.center + delta, d.radius, d.marker_angle))
            .collect();
        Configuration::new(disks, self.label.clone())
    }

    /// Same configuration with disk `i` moved by `delta` and its marker rotated by `rotation`.
    pub fn with_disk_moved(&self, i: usize, delta: Vec2, rotation: f64) -> Result<Self> {
        let mut disks = self.disks.clone();
        let d = disks[i];
        disks[i] = Disk::new(d.center + delta, d.radius, d.marker_angle + rotation);
        Configuration::new(disks, self.label.clone())
    }

    pub(crate) fn cell_candidates(&self) -> &[LiftedDisk] {
        &self.cell_candidates
    }

    /// Walks the unit cells crossed by the ray `q + t v`, `0 <= t <= max_len`,
    /// calling `visit(candidates shifted to the cell, t_enter, t_exit)`.
    pub(crate) fn walk_cells<B>(
        &self,
        q: Vec2,
        v: Vec2,
        max_len: f64,
        mut visit: impl FnMut(Vec2, f64, f64) -> ControlFlow<B>,
    ) -> Option<B> {
        let mut ix = q.x.floor();
        let mut iy = q.y.floor();
        let (step_x, mut t_max_x, dt_x) = dda_axis(q.x, v.x, ix);
        let (step_y, mut t_max_y, dt_y) = dda_axis(q.y, v.y, iy);
        let mut t_enter = 0.0f64;
        loop {
            let t_exit = t_max_x.min(t_max_y);
            if let ControlFlow::Break(b) = visit(Vec2::new(ix, iy), t_enter, t_exit) {
                return Some(b);
            }
            if t_exit > max_len {
                return None;
            }
            t_enter = t_exit;
            if t_max_x < t_max_y {
                ix += step_x;
                t_max_x += dt_x;
            } else {
                iy += step_y;
                t_max_y += dt_y;
            }
        }
    }
}

fn dda_axis(q: f64, v: f64, cell: f64) -> (f64, f64, f64) {
    if v > 0.0 {
        (1.0, (cell + 1.0 - q) / v, 1.0 / v)
    } else if v < 0.0 {
        (-1.0, (cell - q) / v, -1.0 / v)
    } else {
        (0.0, f64::INFINITY, f64::INFINITY)
    }
}

fn build_cell_candidates(disks: &[Disk]) -> Vec<LiftedDisk> {
    let mut out = Vec::new();
    for (i, d) in disks.iter().enumerate() {
        let reach = d.radius.ceil() as i64 + 1;
        for ox in -reach..=reach {
            for oy in -reach..=reach {
                let c = d.center + Vec2::new(ox as f64, oy as f64);
                // distance from c to the closed square [0,1]²
                let dx = (0.0f64 - c.x).max(c.x - 1.0).max(0.0);
                let dy = (0.0f64 - c.y).max(c.y - 1.0).max(0.0);
                if dx.hypot(dy) <= d.radius * (1.0 + 1e-12) + 1e-12 {
                    out.push(LiftedDisk {
                        disk: i,
                        base: d.center,
                        offset: Vec2::new(ox as f64, oy as f64),
                        radius: d.radius,
                    });
                }
            }
        }
    }
    out
}

fn min_gap(disks: &[Disk]) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut worst_pair = (0, 0);
    for (i, a) in disks.iter().enumerate() {
        for (j, b) in disks.iter().enumerate().skip(i) {
            let base = (b.center - a.center).min_image();
            for ox in -2i32..=2 {
                for oy in -2i32..=2 {
                    if i == j && ox == 0 && oy == 0 {
                        continue;
                    }
                    let d = base + Vec2::new(ox as f64, oy as f64);
                    let gap = d.norm() - a.radius - b.radius;
                    if gap < best {
                        best = gap;
                        worst_pair = (i, j);
                    }
                }
            }
        }
    }
    if best <= 0.0 {
        return Err(Error::OverlappingScatterers {
            first: worst_pair.0,
            second: worst_pair.1,
            gap: best,
        });
    }
    Ok(best)
}

/// Shortest free segment between distinct lifted scatterers.
pub fn tau_min(config: &Configuration) -> Result<f64> {
    min_gap(config.disks())
}

/// Longest straight escape from `∂B_i` through the annulus `B_{i,β} \ B_i`,
/// maximized over disks: the tangent chord `sqrt((R+β)² − R²)`.
pub fn escape_time(config: &Configuration, beta: f64) -> f64 {
    config
        .disks()
        .iter()
        .map(|d| ((d.radius + beta).powi(2) - d.radius * d.radius).max(0.0).sqrt())
        .fold(0.0, f64::max)
}

/// Finite-horizon parameters: every directed segment of length `t` must meet
/// a scatterer from outside at an angle greater than `phi` from its tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSpec {
    pub t: f64,
    pub phi: f64,
}

impl HorizonSpec {
    pub fn new(t: f64, phi: f64) -> Result<Self> {
        let spec = Self { t, phi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidHorizon(format!("t = {} must be > 0", self.t)));
        }
        if !(self.phi > 0.0 && self.phi < FRAC_PI_2) {
            return Err(Error::InvalidHorizon(format!(
                "phi = {} must lie in (0, pi/2)",
                self.phi
            )));
        }
        Ok(())
    }
}

/// Sampling density of [`horizon_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonResolution {
    pub base_points: usize,
    pub directions: usize,
}

impl Default for HorizonResolution {
    fn default() -> Self {
        Self {
            base_points: 256,
            directions: 512,
        }
    }
}

/// A sampled directed segment together with the best contact angle it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonWitness {
    pub start: Vec2,
    pub direction_angle: f64,
    pub length: f64,
    /// Largest contact angle (from the tangent line) over entries into a scatterer; 0 if none.
    pub best_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonVerdict {
    /// `true` means no violation was found at this resolution.
    pub holds: bool,
    /// Segment with the smallest best contact angle among all samples
    /// starting outside the scatterers.
    pub witness: HorizonWitness,
}

/// Best contact angle of the open segment `q + s v`, `0 < s < length`.
pub fn segment_best_angle(config: &Configuration, q: Vec2, v: Vec2, length: f64) -> f64 {
    let mut best = 0.0f64;
    config.walk_cells(q, v, length, |cell, t_enter, _| {
        if t_enter >= length {
            return ControlFlow::Break(());
        }
        for c in config.cell_candidates() {
            let w = c.center_in(cell) - q;
            let d = w.cross(v).abs();
            if d >= c.radius {
                continue;
            }
            let half = (c.radius * c.radius - d * d).sqrt();
            let t1 = w.dot(v) - half;
            if t1 > 0.0 && t1 < length {
                best = best.max((d / c.radius).min(1.0).acos());
            }
        }
        ControlFlow::Continue(())
    });
    best
}

/// Grid sweep of the `(t, φ)`-horizon condition. A semidecision: `holds == true`
/// only certifies that no sampled segment violates the condition.
pub fn horizon_check(
    config: &Configuration,
    spec: HorizonSpec,
    resolution: HorizonResolution,
) -> HorizonVerdict {
    let n = resolution.base_points.max(1);
    let m = resolution.directions.max(1);
    let total = n * n * m;
    let sample = |idx: usize| -> HorizonWitness {
        let dir = idx % m;
        let cell = idx / m;
        let (i, j) = (cell / n, cell % n);
        let start = Vec2::new(i as f64 / n as f64, j as f64 / n as f64);
        let direction_angle = TAU * dir as f64 / m as f64;
        let v = Vec2::from_angle(direction_angle);
        // segments live in the table; base points inside a scatterer impose nothing
        let inside = config
            .disks()
            .iter()
            .any(|d| (start - d.center).min_image().norm() < d.radius);
        HorizonWitness {
            start,
            direction_angle,
            length: spec.t,
            best_angle: if inside {
                f64::INFINITY
            } else {
                segment_best_angle(config, start, v, spec.t)
            },
        }
    };
    let witness = (0..total)
        .into_par_iter()
        .map(sample)
        .reduce_with(|a, b| {
            // ties resolved towards the earlier sample, independent of scheduling
            if b.best_angle < a.best_angle
                || (b.best_angle == a.best_angle && witness_index(&b, n, m) < witness_index(&a, n, m))
            {
                b
            } else {
                a
            }
        })
        .expect("at least one sample");
    HorizonVerdict {
        holds: witness.best_angle > spec.phi,
        witness,
    }
}

fn witness_index(w: &HorizonWitness, n: usize, m: usize) -> usize {
    let i = (w.start.x * n as f64).round() as usize;
    let j = (w.start.y * n as f64).round() as usize;
    let dir = (w.direction_angle / TAU * m as f64).round() as usize;
    (i * n + j) * m + dir
}

/// Outcome of the admissibility test for a (source, target) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub tau_min: f64,
    pub beta: f64,
    pub escape_time: f64,
    pub admissible: bool,
    /// Free-flight bounds `(τ_min/2, t)` valid for admissible pairs.
    pub flight_bounds: (f64, f64),
    /// Largest `|c'_i − c_i| + R'_i − R_i` over disks; containment needs `<= β`.
    pub max_excursion: f64,
}

/// Checks `B'_i ⊂ B_{i,β}` for every disk and `τ_esc(β) < τ_min − β`.
pub fn admissibility(
    source: &Configuration,
    target: &Configuration,
    beta: f64,
    spec: HorizonSpec,
) -> Result<AdmissibilityReport> {
    if source.len() != target.len() {
        return Err(Error::MismatchedScattererCount {
            left: source.len(),
            right: target.len(),
        });
    }
    let tau = source.tau_min();
    let esc = escape_time(source, beta);
    let max_excursion = source
        .disks()
        .iter()
        .zip(target.disks())
        .map(|(a, b)| (b.center - a.center).min_image().norm() + b.radius - a.radius)
        .fold(f64::NEG_INFINITY, f64::max);
    let admissible = beta > 0.0 && max_excursion <= beta && esc < tau - beta;
    Ok(AdmissibilityReport {
        tau_min: tau,
        beta,
        escape_time: esc,
        admissible,
        flight_bounds: (tau / 2.0, spec.t),
        max_excursion,
    })
}

/// Euclidean metric on configurations: torus displacement of each center and
/// rotation of each marker, combined in quadrature.
pub fn config_distance(a: &Configuration, b: &Configuration) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedScattererCount {
            left: a.len(),
            right: b.len(),
        });
    }
    let sum: f64 = a
        .disks()
        .iter()
        .zip(b.disks())
        .map(|(p, q)| {
            let dc = (q.center - p.center).min_image();
            let mut da = (q.marker_angle - p.marker_angle).rem_euclid(TAU);
            if da > TAU / 2.0 {
                da -= TAU;
            }
            dc.norm_sq() + da * da
        })
        .sum();
    Ok(sum.sqrt())
}

/// Torus reduction of a single coordinate, exposed for scenario generators.
pub fn wrap_coordinate(x: f64) -> f64 {
    wrap_unit(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_disks() -> Configuration {
        Configuration::new(
            vec![
                Disk::new(Vec2::new(0.25, 0.25), 0.2, 0.0),
                Disk::new(Vec2::new(0.75, 0.75), 0.2, 0.0),
            ],
            "two",
        )
        .unwrap()
    }

    // independent oracle: every pair of copies in a 5x5 block, raw coordinates
    fn brute_tau_min(disks: &[Disk]) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in disks.iter().enumerate() {
            for (j, b) in disks.iter().enumerate() {
                for ox in -2..=2 {
                    for oy in -2..=2 {
                        if i == j && ox == 0 && oy == 0 {
                            continue;
                        }
                        let dx = b.center.x + ox as f64 - a.center.x;
                        let dy = b.center.y + oy as f64 - a.center.y;
                        best = best.min((dx * dx + dy * dy).sqrt() - a.radius - b.radius);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn tau_min_matches_brute_force() {
        let c = two_disks();
        let expected = brute_tau_min(c.disks());
        assert!((expected - (0.5f64.sqrt() - 0.4)).abs() < 1e-15);
        assert!((tau_min(&c).unwrap() - expected).abs() < 1e-14);
        assert!((tau_min(&c).unwrap() - 0.307_106_781).abs() < 1e-8);

        let one = Configuration::new(vec![Disk::new(Vec2::new(0.5, 0.5), 0.2, 0.0)], "one").unwrap();
        assert!((tau_min(&one).unwrap() - 0.6).abs() < 1e-14);
        assert!((brute_tau_min(one.disks()) - 0.6).abs() < 1e-14);
    }

    #[test]
    fn tau_min_translation_invariant() {
        let c = two_disks();
        let t = c.translated(Vec2::new(0.37, 0.81)).unwrap();
        assert!((tau_min(&c).unwrap() - tau_min(&t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn overlapping_disks_rejected() {
        let err = Configuration::new(
            vec![
                Disk::new(Vec2::new(0.2, 0.2), 0.2, 0.0),
                Disk::new(Vec2::new(0.45, 0.2), 0.2, 0.0),
            ],
            "bad",
        )
        .unwrap_err();
        assert!(matches!(err, Error::OverlappingScatterers { .. }));
        // self-overlap across the torus
        let err = Configuration::new(vec![Disk::new(Vec2::new(0.5, 0.5), 0.5, 0.0)], "big").unwrap_err();
        assert!(matches!(err, Error::OverlappingScatterers { .. }));
    }

    // chord from a point of the inner circle, maximized over direction
    fn brute_escape(radius: f64, beta: f64) -> f64 {
        let outer = radius + beta;
        let mut best = 0.0f64;
        let p = Vec2::new(radius, 0.0);
        for k in 0..=200_000 {
            let psi = -FRAC_PI_2 + std::f64::consts::PI * k as f64 / 200_000.0;
            let d = Vec2::from_angle(psi);
            let b = p.dot(d);
            let t = -b + (b * b - (radius * radius - outer * outer)).sqrt();
            best = best.max(t);
        }
        best
    }

    #[test]
    fn escape_time_closed_form_and_oracle() {
        let one = Configuration::new(vec![Disk::new(Vec2::new(0.5, 0.5), 0.2, 0.0)], "one").unwrap();
        assert!((escape_time(&one, 0.05) - 0.15).abs() < 1e-12);
        assert!((brute_escape(0.2, 0.05) - 0.15).abs() < 1e-9);
        assert!(escape_time(&one, 1e-12) < 1e-5);

        let mixed = Configuration::new(
            vec![
                Disk::new(Vec2::new(0.25, 0.25), 0.1, 0.0),
                Disk::new(Vec2::new(0.75, 0.75), 0.2, 0.0),
            ],
            "mixed",
        )
        .unwrap();
        let e = escape_time(&mixed, 0.05);
        assert!(brute_escape(0.2, 0.05) > brute_escape(0.1, 0.05));
        assert!((e - brute_escape(0.2, 0.05)).abs() < 1e-9);
    }

    #[test]
    fn escape_time_monotone_in_beta() {
        let c = two_disks();
        let mut prev = 0.0;
        for k in 1..100 {
            let e = escape_time(&c, k as f64 * 1e-3);
            assert!(e > prev);
            assert!(e < k as f64 * 1e-3 + 0.8);
            prev = e;
        }
    }

    #[test]
    fn horizon_single_disk_has_corridor() {
        let one = Configuration::new(vec![Disk::new(Vec2::new(0.5, 0.5), 0.2, 0.0)], "one").unwrap();
        let res = HorizonResolution {
            base_points: 16,
            directions: 16,
        };
        let v = horizon_check(&one, HorizonSpec { t: 5.0, phi: 0.05 }, res);
        assert!(!v.holds);
        assert_eq!(v.witness.best_angle, 0.0);
        // witness is axis aligned
        let a = v.witness.direction_angle;
        assert!((a / FRAC_PI_2 - (a / FRAC_PI_2).round()).abs() < 1e-12);
    }

    #[test]
    fn horizon_right_angle_impossible() {
        let c = two_disks();
        let v = horizon_check(
            &c,
            HorizonSpec {
                t: 3.0,
                phi: FRAC_PI_2,
            },
            HorizonResolution {
                base_points: 8,
                directions: 8,
            },
        );
        assert!(!v.holds);
        assert!(HorizonSpec::new(3.0, FRAC_PI_2).is_err());
    }

    #[test]
    fn admissibility_cases() {
        let c = two_disks();
        let spec = HorizonSpec { t: 2.0, phi: 0.05 };
        let same = admissibility(&c, &c, 0.05, spec).unwrap();
        assert!(same.admissible);
        assert!((same.flight_bounds.0 - c.tau_min() / 2.0).abs() < 1e-15);

        let shifted = c.with_disk_moved(1, Vec2::new(0.01, 0.0), 0.0).unwrap();
        let r = admissibility(&c, &shifted, 0.05, spec).unwrap();
        assert!(r.admissible);
        assert!((r.max_excursion - 0.01).abs() < 1e-12);

        let far = c.with_disk_moved(1, Vec2::new(0.1, 0.0), 0.0).unwrap();
        assert!(!admissibility(&c, &far, 0.05, spec).unwrap().admissible);

        let one = Configuration::new(vec![Disk::new(Vec2::new(0.5, 0.5), 0.2, 0.0)], "one").unwrap();
        assert!(matches!(
            admissibility(&c, &one, 0.05, spec),
            Err(Error::MismatchedScattererCount { .. })
        ));
    }

    #[test]
    fn config_distance_cases() {
        let c = two_disks();
        assert_eq!(config_distance(&c, &c).unwrap(), 0.0);
        let s = c.with_disk_moved(0, Vec2::new(0.01, 0.0), 0.0).unwrap();
        assert!((config_distance(&c, &s).unwrap() - 0.01).abs() < 1e-12);

        let a = Configuration::new(vec![Disk::new(Vec2::new(0.99, 0.5), 0.1, 0.0)], "a").unwrap();
        let b = Configuration::new(vec![Disk::new(Vec2::new(0.01, 0.5), 0.1, 0.0)], "b").unwrap();
        assert!((config_distance(&a, &b).unwrap() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn cell_candidates_cover_every_disk_copy() {
        let c = two_disks();
        // any point of the unit square inside a lifted disk must be inside a candidate
        for i in 0..50 {
            for j in 0..50 {
                let p = Vec2::new(i as f64 / 49.0, j as f64 / 49.0);
                let inside_any = c.disks().iter().any(|d| (p - d.center).min_image().norm() < d.radius);
                let inside_candidate = c
                    .cell_candidates()
                    .iter()
                    .any(|l| (p - l.center_in(Vec2::default())).norm() < l.radius);
                assert_eq!(inside_any, inside_candidate, "{p:?}");
            }
        }
    }
}
