//! Derivative of the collision map in `(dr, dφ)` coordinates, invariant
//! cones, homogeneity strips, separation time and a Monte-Carlo audit of
//! these objects.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::billiard::{BilliardMap, CollisionRecord, PhasePoint};
use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::sampling::{sample_invariant, substream};
use crate::scenario::ScenarioSequence;

/// Collisions with `cos φ′` at or below this are treated as singular.
pub const SINGULAR_COS: f64 = 1e-12;

/// Row-major 2×2 matrix acting on `(dr, dφ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentMatrix(pub [[f64; 2]; 2]);

impl TangentMatrix {
    pub const IDENTITY: TangentMatrix = TangentMatrix([[1.0, 0.0], [0.0, 1.0]]);

    /// Determinant by Kahan's fused multiply-add scheme, accurate to a few
    /// ulps of the exact determinant of the stored entries.
    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        kahan_diff_of_products(a, d, b, c)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let [[a, b], [c, d]] = self.0;
        [a * v[0] + b * v[1], c * v[0] + d * v[1]]
    }

    pub fn mul(&self, other: &TangentMatrix) -> TangentMatrix {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = other.0;
        TangentMatrix([[a * e + b * g, a * f + b * h], [c * e + d * g, c * f + d * h]])
    }

    pub fn inverse(&self) -> Result<TangentMatrix> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularCollision { cos_phi_out: 0.0 });
        }
        let [[a, b], [c, d]] = self.0;
        Ok(TangentMatrix([[d / det, -b / det], [-c / det, a / det]]))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// `a·b − c·d` with one rounding error compensated.
fn kahan_diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let w = c * d;
    let err = (-c).mul_add(d, w);
    let f = a.mul_add(b, -w);
    f + err
}

/// `D_xF` for the collision `x ↦ record.image`, with `kappa` the curvature of
/// the scatterer at `x` and `kappa_out` the curvature at the image.
pub fn dxf(
    x: PhasePoint,
    record: &CollisionRecord,
    kappa: f64,
    kappa_out: f64,
) -> Result<TangentMatrix> {
    let cos_out = record.cos_phi_out;
    if cos_out <= SINGULAR_COS {
        return Err(Error::SingularCollision {
            cos_phi_out: cos_out,
        });
    }
    let tau = record.flight_time;
    let cos_in = x.phi.cos();
    let s = -1.0 / cos_out;
    Ok(TangentMatrix([
        [s * (tau * kappa + cos_in), s * tau],
        [
            s * (tau * kappa * kappa_out + kappa * cos_out + kappa_out * cos_in),
            s * (tau * kappa_out + cos_out),
        ],
    ]))
}

/// `D_xF` with entries carried in double-double precision. The determinant of
/// the f64 matrix suffers cancellation of order `ε τ² κ κ′ / cos² φ′`; this form
/// resolves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedTangentMatrix(pub [[TwoFloat; 2]; 2]);

impl ExtendedTangentMatrix {
    pub fn det(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        f64::from(a * d - b * c)
    }

    pub fn to_f64(&self) -> TangentMatrix {
        let [[a, b], [c, d]] = self.0;
        TangentMatrix([[a.into(), b.into()], [c.into(), d.into()]])
    }
}

/// Same formula as [`dxf`] evaluated in double-double arithmetic.
pub fn dxf_extended(
    x: PhasePoint,
    record: &CollisionRecord,
    kappa: f64,
    kappa_out: f64,
) -> Result<ExtendedTangentMatrix> {
    let cos_out = record.cos_phi_out;
    if cos_out <= SINGULAR_COS {
        return Err(Error::SingularCollision {
            cos_phi_out: cos_out,
        });
    }
    let tau = TwoFloat::from(record.flight_time);
    let cos_in = TwoFloat::from(x.phi.cos());
    let cos_o = TwoFloat::from(cos_out);
    let k = TwoFloat::from(kappa);
    let k2 = TwoFloat::from(kappa_out);
    let s = TwoFloat::from(-1.0) / cos_o;
    Ok(ExtendedTangentMatrix([
        [s * (tau * k + cos_in), s * tau],
        [
            s * (tau * k * k2 + k * cos_o + k2 * cos_in),
            s * (tau * k2 + cos_o),
        ],
    ]))
}

/// Convenience: step with `map` and differentiate.
pub fn step_with_derivative(map: &BilliardMap<'_>, x: PhasePoint) -> Result<(CollisionRecord, TangentMatrix)> {
    let rec = map.step(x)?;
    let m = dxf(
        x,
        &rec,
        map.source().disk(x.disk).curvature(),
        map.target().disk(rec.image.disk).curvature(),
    )?;
    Ok((rec, m))
}

/// Constant cone field in slope coordinates `dφ/dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeSpec {
    pub slope_min: f64,
    pub slope_max: f64,
    pub stable_slope_min: f64,
    pub stable_slope_max: f64,
}

impl ConeSpec {
    /// Unstable cone `[κ_min, κ_max + 2/τ̄]`, stable cone its mirror image.
    pub fn new(kappa_min: f64, kappa_max: f64, tau_bar_min: f64) -> Result<Self> {
        if !(kappa_min > 0.0 && kappa_max >= kappa_min && tau_bar_min > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "cone needs 0 < kappa_min <= kappa_max and tau > 0 (got {kappa_min}, {kappa_max}, {tau_bar_min})"
            )));
        }
        let slope_max = kappa_max + 2.0 / tau_bar_min;
        Ok(Self {
            slope_min: kappa_min,
            slope_max,
            stable_slope_min: -slope_max,
            stable_slope_max: -kappa_min,
        })
    }

    /// Cone valid for every pair of the scenario: curvature bounds over all
    /// configurations and `τ̄` the smallest of their minimal free paths.
    pub fn for_scenario(scenario: &ScenarioSequence) -> Result<Self> {
        let configs = (0..=scenario.len()).map(|k| scenario.config(k));
        Self::for_configs(configs)
    }

    pub fn for_configs<'a>(configs: impl IntoIterator<Item = &'a Configuration>) -> Result<Self> {
        let (mut kmin, mut kmax, mut tau) = (f64::INFINITY, 0.0f64, f64::INFINITY);
        for c in configs {
            let (lo, hi) = c.kappa_bounds();
            kmin = kmin.min(lo);
            kmax = kmax.max(hi);
            tau = tau.min(c.tau_min());
        }
        Self::new(kmin, kmax, tau)
    }

    pub fn mid_slope(&self) -> f64 {
        0.5 * (self.slope_min + self.slope_max)
    }

    pub fn contains_unstable(&self, slope: f64) -> bool {
        let tol = 1e-12 * self.slope_max;
        slope >= self.slope_min - tol && slope <= self.slope_max + tol
    }

    pub fn contains_stable(&self, slope: f64) -> bool {
        let tol = 1e-12 * self.slope_max;
        slope >= self.stable_slope_min - tol && slope <= self.stable_slope_max + tol
    }
}

fn image_slope(m: &TangentMatrix, slope: f64) -> Result<f64> {
    let [dr, dphi] = m.apply([1.0, slope]);
    if dr == 0.0 || !dr.is_finite() {
        return Err(Error::VerticalImage);
    }
    Ok(dphi / dr)
}

/// Slopes of the images of the lower and upper unstable cone edges.
pub fn cone_image_slopes(m: &TangentMatrix, cone: &ConeSpec) -> Result<(f64, f64)> {
    Ok((image_slope(m, cone.slope_min)?, image_slope(m, cone.slope_max)?))
}

/// Slopes of the images of the two stable cone edges under `m⁻¹`.
pub fn stable_cone_preimage_slopes(m: &TangentMatrix, cone: &ConeSpec) -> Result<(f64, f64)> {
    let inv = m.inverse()?;
    Ok((
        image_slope(&inv, cone.stable_slope_min)?,
        image_slope(&inv, cone.stable_slope_max)?,
    ))
}

/// Expansion factor `‖m v‖ / ‖v‖` in the Euclidean `(dr, dφ)` norm.
pub fn unstable_jacobian(m: &TangentMatrix, v: [f64; 2]) -> f64 {
    let w = m.apply(v);
    w[0].hypot(w[1]) / v[0].hypot(v[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HomogeneityScheme {
    pub k0: u32,
    /// Strips beyond this index are lumped into [`Strip::NearTangential`].
    pub k_max: u32,
}

impl Default for HomogeneityScheme {
    fn default() -> Self {
        Self {
            k0: 10,
            k_max: 10_000,
        }
    }
}

impl HomogeneityScheme {
    pub fn new(k0: u32) -> Result<Self> {
        if k0 < 2 {
            return Err(Error::ParameterDomain(format!("k0 = {k0} must be >= 2")));
        }
        Ok(Self {
            k0,
            ..Self::default()
        })
    }

    /// Angles `π/2 − k⁻²` of the positive strip boundaries for `k0 <= k <= k_max + 1`.
    pub fn boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        (self.k0..=self.k_max + 1).map(|k| FRAC_PI_2 - 1.0 / (k as f64 * k as f64))
    }
}

/// Homogeneity strip of an angle: `Index(0)` is the central strip, `Index(±k)`
/// the strips accumulating at `±π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Strip {
    Index(i64),
    /// Closer to tangency than the last resolved strip; sign of `φ` kept.
    NearTangential(i8),
}

impl Strip {
    /// Two points are in the same strip only if both are resolved and equal.
    pub fn same_as(&self, other: &Strip) -> bool {
        matches!((self, other), (Strip::Index(a), Strip::Index(b)) if a == b)
    }

    pub fn index(&self) -> Option<i64> {
        match *self {
            Strip::Index(k) => Some(k),
            Strip::NearTangential(_) => None,
        }
    }
}

/// `H_k = {π/2 − k⁻² < φ <= π/2 − (k+1)⁻²}`, mirrored for negative `k`;
/// `H_0 = {|φ| <= π/2 − k0⁻²}`.
pub fn homogeneity_index(phi: f64, scheme: &HomogeneityScheme) -> Strip {
    let sign: i64 = if phi < 0.0 { -1 } else { 1 };
    let delta = FRAC_PI_2 - phi.abs();
    let k0 = scheme.k0 as f64;
    if delta >= 1.0 / (k0 * k0) {
        return Strip::Index(0);
    }
    if delta <= 0.0 {
        return Strip::NearTangential(sign as i8);
    }
    // largest k with delta < k⁻²
    let mut k = (1.0 / delta.sqrt()).ceil() as i64 - 1;
    // guard the floating estimate against the exact inequalities
    while k > scheme.k0 as i64 && delta >= 1.0 / ((k * k) as f64) {
        k -= 1;
    }
    while delta < 1.0 / (((k + 1) * (k + 1)) as f64) {
        k += 1;
    }
    if k > scheme.k_max as i64 {
        return Strip::NearTangential(sign as i8);
    }
    Strip::Index(sign * k)
}

/// First iterate at which two orbits are in different strips or components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Separation {
    At(usize),
    /// No separation observed during the first `n` iterates.
    Saturated(usize),
}

impl Separation {
    pub fn value(&self) -> usize {
        match *self {
            Separation::At(n) | Separation::Saturated(n) => n,
        }
    }
}

fn separated(x: &PhasePoint, y: &PhasePoint, scheme: &HomogeneityScheme) -> bool {
    x.disk != y.disk || !homogeneity_index(x.phi, scheme).same_as(&homogeneity_index(y.phi, scheme))
}

/// Smallest `n < n_max` with `F_n x` and `F_n y` separated, where `F_0` is the identity.
pub fn separation_time(
    x: PhasePoint,
    y: PhasePoint,
    scenario: &ScenarioSequence,
    n_max: usize,
    scheme: &HomogeneityScheme,
) -> Result<Separation> {
    let (mut a, mut b) = (x, y);
    for n in 0..n_max {
        if n > 0 {
            let map = scenario.map(n)?;
            a = map.step(a).map_err(|e| e.at_step(n))?.image;
            b = map.step(b).map_err(|e| e.at_step(n))?.image;
        }
        if separated(&a, &b, scheme) {
            return Ok(Separation::At(n));
        }
    }
    Ok(Separation::Saturated(n_max))
}

/// Parameters of [`tangent_audit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditSettings {
    pub samples: usize,
    pub seed: u64,
    pub scheme: HomogeneityScheme,
    /// Finite differences are compared only when both the source and the
    /// image are farther than this from tangency.
    pub fd_margin: f64,
    pub orbits: usize,
    pub orbit_len: usize,
    /// Extra collisions constructed to land in each strip `k0 <= |k| < k0 + strip_probes`.
    pub strip_probes: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 1,
            scheme: HomogeneityScheme::default(),
            fd_margin: 1e-3,
            orbits: 64,
            orbit_len: 2_000,
            strip_probes: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub n_samples: usize,
    pub skipped_no_collision: usize,
    pub skipped_singular: usize,
    /// Determinant error of the double-double evaluation of `D_xF`.
    pub det_max_abs_err: f64,
    /// `cos φ′` at the sample attaining `det_max_abs_err`.
    pub det_worst_cos_out: f64,
    /// Determinant error of the f64 matrix, for reference.
    pub det_f64_max_abs_err: f64,
    pub cone_violations: usize,
    pub stable_cone_violations: usize,
    pub fd_samples: usize,
    pub fd_skipped_straddle: usize,
    pub fd_max_rel_err: f64,
    pub expansion_min: f64,
    pub lambda_hat: f64,
    pub c_cos_low: f64,
    pub c_cos_high: f64,
    pub cos_band_samples: usize,
}

#[derive(Default, Clone, Copy)]
struct SampleOutcome {
    no_collision: bool,
    singular: bool,
    det_err: f64,
    det_f64_err: f64,
    cos_out: f64,
    cone_bad: bool,
    stable_bad: bool,
    fd: Option<f64>,
    fd_straddle: bool,
    expansion: f64,
    cos_k2: Option<f64>,
}

fn wrapped_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > 0.5 * period {
        d - period
    } else {
        d
    }
}

/// Central-difference Jacobian of `map` at `x`, or `None` when the stencil
/// leaves the smooth branch of `rec`.
fn fd_jacobian(map: &BilliardMap<'_>, x: PhasePoint, rec: &CollisionRecord) -> Option<TangentMatrix> {
    let margin = rec.tangential_margin.min(x.tangential_margin());
    let h = 1e-6 * (10.0 * margin * margin).min(1.0);
    let period_in = map.source().disk(x.disk).perimeter();
    let period_out = map.target().disk(rec.image.disk).perimeter();
    let mut cols = [[0.0; 2]; 2];
    for (j, col) in cols.iter_mut().enumerate() {
        let shift = |s: f64| {
            let mut p = x;
            if j == 0 {
                p.r = (p.r + s).rem_euclid(period_in);
            } else {
                p.phi += s;
            }
            p
        };
        let plus = map.step(shift(h)).ok()?;
        let minus = map.step(shift(-h)).ok()?;
        // a jump in flight time means another scatterer copy was hit
        let same_branch = |p: &CollisionRecord| {
            p.image.disk == rec.image.disk && (p.flight_time - rec.flight_time).abs() < 1e-3
        };
        if !same_branch(&plus) || !same_branch(&minus) {
            return None;
        }
        col[0] = wrapped_diff(plus.image.r, minus.image.r, period_out) / (2.0 * h);
        col[1] = (plus.image.phi - minus.image.phi) / (2.0 * h);
    }
    Some(TangentMatrix([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]))
}

fn audit_one(map: &BilliardMap<'_>, x: PhasePoint, cone: &ConeSpec, s: &AuditSettings) -> SampleOutcome {
    let mut out = SampleOutcome::default();
    let rec = match map.step(x) {
        Ok(r) => r,
        Err(_) => {
            out.no_collision = true;
            return out;
        }
    };
    let m = match dxf(
        x,
        &rec,
        map.source().disk(x.disk).curvature(),
        map.target().disk(rec.image.disk).curvature(),
    ) {
        Ok(m) => m,
        Err(_) => {
            out.singular = true;
            return out;
        }
    };
    out.cos_out = rec.cos_phi_out;
    let det_expected = x.phi.cos() / rec.cos_phi_out;
    out.det_f64_err = (m.det() - det_expected).abs();
    out.det_err = dxf_extended(
        x,
        &rec,
        map.source().disk(x.disk).curvature(),
        map.target().disk(rec.image.disk).curvature(),
    )
    .map_or(f64::INFINITY, |e| (e.det() - det_expected).abs());
    out.cone_bad = match cone_image_slopes(&m, cone) {
        Ok((a, b)) => !(cone.contains_unstable(a) && cone.contains_unstable(b)),
        Err(_) => true,
    };
    out.stable_bad = match stable_cone_preimage_slopes(&m, cone) {
        Ok((a, b)) => !(cone.contains_stable(a) && cone.contains_stable(b)),
        Err(_) => true,
    };
    out.expansion = unstable_jacobian(&m, [1.0, cone.slope_min]).min(unstable_jacobian(&m, [1.0, cone.slope_max]));
    if rec.tangential_margin > s.fd_margin && x.tangential_margin() > s.fd_margin {
        match fd_jacobian(map, x, &rec) {
            Some(fd) => {
                let diff = TangentMatrix([
                    [fd.0[0][0] - m.0[0][0], fd.0[0][1] - m.0[0][1]],
                    [fd.0[1][0] - m.0[1][0], fd.0[1][1] - m.0[1][1]],
                ]);
                out.fd = Some(diff.max_abs() / m.max_abs());
            }
            None => out.fd_straddle = true,
        }
    }
    if let Strip::Index(k) = homogeneity_index(rec.image.phi, &s.scheme) {
        if k != 0 {
            out.cos_k2 = Some(rec.cos_phi_out * (k * k) as f64);
        }
    }
    out
}

/// Monte-Carlo audit of the derivative over the maps of `scenario`: sample `i`
/// uses map `1 + i mod len` and a point drawn from `cos φ dr dφ` on its source.
pub fn tangent_audit(scenario: &ScenarioSequence, settings: &AuditSettings) -> Result<AuditReport> {
    if scenario.is_empty() {
        return Err(Error::ParameterDomain("audit needs at least one step".into()));
    }
    let cone = ConeSpec::for_scenario(scenario)?;
    let len = scenario.len();
    let outcomes: Vec<SampleOutcome> = (0..settings.samples)
        .into_par_iter()
        .map(|i| {
            let map = scenario.map(1 + i % len).expect("index in range");
            let mut rng = substream(settings.seed, i as u64);
            let x = sample_invariant(map.source(), &mut rng);
            audit_one(&map, x, &cone, settings)
        })
        .collect();

    let probes: Vec<Option<f64>> = (0..settings.strip_probes * 2)
        .into_par_iter()
        .map(|j| strip_probe(scenario, settings, j))
        .collect();

    let mut report = AuditReport {
        n_samples: settings.samples,
        skipped_no_collision: 0,
        skipped_singular: 0,
        det_max_abs_err: 0.0,
        det_worst_cos_out: 1.0,
        det_f64_max_abs_err: 0.0,
        cone_violations: 0,
        stable_cone_violations: 0,
        fd_samples: 0,
        fd_skipped_straddle: 0,
        fd_max_rel_err: 0.0,
        expansion_min: f64::INFINITY,
        lambda_hat: lyapunov_estimate(scenario.config(0), scenario, &cone, settings),
        c_cos_low: f64::INFINITY,
        c_cos_high: 0.0,
        cos_band_samples: 0,
    };
    let band = outcomes.iter().map(|o| o.cos_k2).chain(probes);
    for v in band.flatten() {
        report.cos_band_samples += 1;
        report.c_cos_low = report.c_cos_low.min(v);
        report.c_cos_high = report.c_cos_high.max(v);
    }
    for o in &outcomes {
        if o.no_collision {
            report.skipped_no_collision += 1;
            continue;
        }
        if o.singular {
            report.skipped_singular += 1;
            continue;
        }
        if o.det_err > report.det_max_abs_err {
            report.det_max_abs_err = o.det_err;
            report.det_worst_cos_out = o.cos_out;
        }
        report.det_f64_max_abs_err = report.det_f64_max_abs_err.max(o.det_f64_err);
        report.cone_violations += o.cone_bad as usize;
        report.stable_cone_violations += o.stable_bad as usize;
        report.expansion_min = report.expansion_min.min(o.expansion);
        report.fd_skipped_straddle += o.fd_straddle as usize;
        if let Some(e) = o.fd {
            report.fd_samples += 1;
            report.fd_max_rel_err = report.fd_max_rel_err.max(e);
        }
    }
    Ok(report)
}

/// Builds a collision whose image lies in strip `±k` by running the reversed
/// map from a chosen image point, and returns `cos φ′ k²` for it.
fn strip_probe(scenario: &ScenarioSequence, s: &AuditSettings, j: usize) -> Option<f64> {
    let k = s.scheme.k0 as i64 + (j / 2) as i64;
    if k > s.scheme.k_max as i64 {
        return None;
    }
    let mut rng = substream(s.seed ^ 0x5eed_57a1, j as u64);
    let map = scenario.map(1).ok()?;
    let reverse = BilliardMap::new_unchecked(map.target(), map.source(), map.beta(), map.max_flight());
    let lo = 1.0 / (((k + 1) * (k + 1)) as f64);
    let hi = 1.0 / ((k * k) as f64);
    let delta = lo + (hi - lo) * rng.random::<f64>();
    let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let target = map.target();
    let disk = crate::sampling::sample_disk(target, &mut rng);
    let y = PhasePoint::new(disk, rng.random::<f64>() * target.disk(disk).perimeter(), sign * (FRAC_PI_2 - delta));
    let x = reverse.step(y.reversed()).ok()?.image.reversed();
    let rec = map.step(x).ok()?;
    if rec.image.disk != y.disk || (rec.image.phi - y.phi).abs() > 1e-9 {
        return None;
    }
    match homogeneity_index(rec.image.phi, &s.scheme) {
        Strip::Index(kk) if kk != 0 => Some(rec.cos_phi_out * (kk * kk) as f64),
        _ => None,
    }
}

/// `exp` of the average log-expansion of a tangent vector carried along
/// orbits of the fixed map on `config`.
fn lyapunov_estimate(
    config: &Configuration,
    scenario: &ScenarioSequence,
    cone: &ConeSpec,
    s: &AuditSettings,
) -> f64 {
    let map = BilliardMap::new_unchecked(config, config, scenario.beta(), scenario.horizon().t);
    let sums: Vec<(f64, usize)> = (0..s.orbits)
        .into_par_iter()
        .map(|o| {
            let mut rng = substream(s.seed ^ 0x0b17_a11e, o as u64);
            let mut x = sample_invariant(config, &mut rng);
            let mut v = [1.0, cone.mid_slope()];
            let (mut log_sum, mut steps) = (0.0, 0usize);
            for _ in 0..s.orbit_len {
                match step_with_derivative(&map, x) {
                    Ok((rec, m)) => {
                        let w = m.apply(v);
                        let n = w[0].hypot(w[1]);
                        log_sum += (n / v[0].hypot(v[1])).ln();
                        v = [w[0] / n, w[1] / n];
                        x = rec.image;
                        steps += 1;
                    }
                    Err(_) => {
                        x = sample_invariant(config, &mut rng);
                        v = [1.0, cone.mid_slope()];
                    }
                }
            }
            (log_sum, steps)
        })
        .collect();
    let (log_sum, steps) = sums.iter().fold((0.0, 0usize), |(a, n), (b, m)| (a + b, n + m));
    if steps == 0 {
        f64::NAN
    } else {
        (log_sum / steps as f64).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Disk, HorizonSpec};
    use crate::vec2::Vec2;

    fn record(tau: f64, phi_out: f64) -> CollisionRecord {
        CollisionRecord {
            image: PhasePoint::new(0, 0.0, phi_out),
            flight_time: tau,
            cos_phi_out: phi_out.cos(),
            tangential_margin: FRAC_PI_2 - phi_out.abs(),
            source_exit_time: 0.0,
            grazing: false,
        }
    }

    #[test]
    fn head_on_matrix() {
        let m = dxf(PhasePoint::new(0, 0.0, 0.0), &record(1.0, 0.0), 5.0, 5.0).unwrap();
        assert_eq!(m.0, [[-6.0, -1.0], [-35.0, -6.0]]);
        assert_eq!(m.det(), 1.0);
        let j = unstable_jacobian(&m, [1.0, 5.0]);
        let expected = (11.0f64 * 11.0 + 65.0 * 65.0).sqrt() / 26.0f64.sqrt();
        assert!((j - expected).abs() < 1e-12);
        assert!((j - 12.93).abs() < 5e-3);
        assert!((unstable_jacobian(&m, [2.0, 10.0]) - j).abs() < 1e-12);
    }

    #[test]
    fn singular_collision_rejected() {
        let err = dxf(PhasePoint::new(0, 0.0, 0.0), &record(1.0, FRAC_PI_2), 5.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::SingularCollision { .. }));
    }

    #[test]
    fn identity_preserves_slopes() {
        let cone = ConeSpec::new(2.0, 5.0, 0.3).unwrap();
        let (a, b) = cone_image_slopes(&TangentMatrix::IDENTITY, &cone).unwrap();
        assert_eq!((a, b), (cone.slope_min, cone.slope_max));
        let vertical = TangentMatrix([[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(cone_image_slopes(&vertical, &cone), Err(Error::VerticalImage)));
    }

    #[test]
    fn strip_indices() {
        let s = HomogeneityScheme::default();
        assert_eq!(homogeneity_index(0.0, &s), Strip::Index(0));
        assert_eq!(homogeneity_index(FRAC_PI_2 - 1.0 / 150.0, &s), Strip::Index(12));
        assert_eq!(homogeneity_index(-FRAC_PI_2 + 1.0 / 150.0, &s), Strip::Index(-12));
        assert_eq!(homogeneity_index(FRAC_PI_2 - 0.01, &s), Strip::Index(0));
        assert_eq!(homogeneity_index(FRAC_PI_2 - 0.0099, &s), Strip::Index(10));
        assert_eq!(homogeneity_index(FRAC_PI_2, &s), Strip::NearTangential(1));
        assert_eq!(homogeneity_index(-FRAC_PI_2 + 1e-10, &s), Strip::NearTangential(-1));
        assert!(!Strip::NearTangential(1).same_as(&Strip::NearTangential(1)));
    }

    #[test]
    fn strip_index_brute_force() {
        let s = HomogeneityScheme::default();
        for i in 0..20_000 {
            let delta = 1e-8 + (i as f64 / 20_000.0).powi(4) * 0.02;
            let phi = FRAC_PI_2 - delta;
            let delta = FRAC_PI_2 - phi;
            let expected = if delta >= 0.01 {
                0
            } else {
                (10..=10_000i64)
                    .find(|&k| {
                        let lo = 1.0 / ((k + 1) * (k + 1)) as f64;
                        let hi = 1.0 / (k * k) as f64;
                        lo <= delta && delta < hi
                    })
                    .unwrap_or(-1)
            };
            let got = homogeneity_index(phi, &s);
            if expected < 0 {
                assert_eq!(got, Strip::NearTangential(1));
            } else {
                assert_eq!(got, Strip::Index(expected), "delta {delta}");
            }
        }
    }

    fn two_disk_scenario(n: usize) -> ScenarioSequence {
        let c = Configuration::new(
            vec![
                Disk::new(Vec2::new(0.25, 0.25), 0.2, 0.0),
                Disk::new(Vec2::new(0.75, 0.75), 0.2, 0.0),
            ],
            "two",
        )
        .unwrap();
        ScenarioSequence::fixed(c, 0.05, HorizonSpec { t: 20.0, phi: 0.05 }, n).unwrap()
    }

    #[test]
    fn separation_trivial_cases() {
        let sc = two_disk_scenario(10);
        let s = HomogeneityScheme::default();
        let x = PhasePoint::new(0, 0.3, 0.2);
        let y = PhasePoint::new(1, 0.3, 0.2);
        assert_eq!(separation_time(x, y, &sc, 10, &s).unwrap(), Separation::At(0));
        assert_eq!(separation_time(x, x, &sc, 10, &s).unwrap(), Separation::Saturated(10));
    }

    #[test]
    fn small_audit_is_clean() {
        let sc = two_disk_scenario(3);
        let settings = AuditSettings {
            samples: 3_000,
            orbits: 4,
            orbit_len: 200,
            strip_probes: 20,
            ..Default::default()
        };
        let r = tangent_audit(&sc, &settings).unwrap();
        assert_eq!(r.cone_violations, 0);
        assert_eq!(r.stable_cone_violations, 0);
        assert!(r.fd_samples > 2_000);
        assert!(r.fd_max_rel_err < 1e-4, "{r:?}");
        assert!(r.lambda_hat > 1.0);
        assert!(r.cos_band_samples >= 20);
        assert!(r.c_cos_low > 0.0 && r.c_cos_high < 10.0, "{r:?}");
    }
}
