use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::billiard::PhasePoint;
use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::sampling::{invariant_mass, sample_invariant, substream};

/// Rejection sampling gives up below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

type DensityFn = dyn Fn(&PhasePoint) -> f64 + Send + Sync;

/// Density with respect to `cos φ dr dφ` on the collision space.
#[derive(Clone)]
pub struct SmoothDensity {
    name: String,
    eval: Arc<DensityFn>,
    /// Declared `1/6`-Hölder constant of `log ρ`.
    pub log_holder: f64,
    pub sup_bound: f64,
}

impl fmt::Debug for SmoothDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothDensity")
            .field("name", &self.name)
            .field("log_holder", &self.log_holder)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl SmoothDensity {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static,
        log_holder: f64,
        sup_bound: f64,
    ) -> Result<Self> {
        if !(sup_bound > 0.0 && sup_bound.is_finite()) {
            return Err(Error::ParameterDomain(format!("sup bound {sup_bound} must be finite and > 0")));
        }
        Ok(Self {
            name: name.into(),
            eval: Arc::new(eval),
            log_holder,
            sup_bound,
        })
    }

    /// Normalized `cos φ dr dφ`.
    pub fn uniform(config: &Configuration) -> Self {
        let c = 1.0 / invariant_mass(config);
        Self {
            name: "uniform".into(),
            eval: Arc::new(move |_| c),
            log_holder: 0.0,
            sup_bound: c,
        }
    }

    /// `ρ ∝ 1 + a sin(2π r/|Γ_i|)` on every disk, `0 <= a < 1`.
    pub fn sinusoidal(config: &Configuration, amplitude: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::ParameterDomain(format!("amplitude {amplitude} must lie in [0, 1)")));
        }
        let c = 1.0 / invariant_mass(config);
        let perimeters: Vec<f64> = config.disks().iter().map(|d| d.perimeter()).collect();
        let min_perimeter = perimeters.iter().copied().fold(f64::INFINITY, f64::min);
        let max_perimeter = perimeters.iter().copied().fold(0.0, f64::max);
        // |d log ρ / dr| <= a (2π/|Γ|) / (1 − a); a Lipschitz constant L on a set
        // of diameter D gives the 1/6-Hölder constant L D^{5/6}
        let lipschitz = amplitude * TAU / min_perimeter / (1.0 - amplitude);
        let diameter = (0.5 * max_perimeter).hypot(PI);
        Ok(Self {
            name: format!("sinusoidal({amplitude})"),
            eval: Arc::new(move |x: &PhasePoint| c * (1.0 + amplitude * (TAU * x.r / perimeters[x.disk]).sin())),
            log_holder: lipschitz * diameter.powf(5.0 / 6.0),
            sup_bound: c * (1.0 + amplitude),
        })
    }

    /// `ρ ∝ 1 + a cos 2φ`, `0 <= a < 1`; unlike [`Self::sinusoidal`] it is
    /// correlated with `cos φ` already at time zero.
    pub fn angular(config: &Configuration, amplitude: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::ParameterDomain(format!("amplitude {amplitude} must lie in [0, 1)")));
        }
        // ∫ cos 2φ cos φ dφ = ⅔ ∫ cos φ dφ
        let c = 1.0 / (invariant_mass(config) * (1.0 + amplitude / 3.0));
        let lipschitz = 2.0 * amplitude / (1.0 - amplitude);
        let max_perimeter = config.disks().iter().map(|d| d.perimeter()).fold(0.0, f64::max);
        let diameter = (0.5 * max_perimeter).hypot(PI);
        Ok(Self {
            name: format!("angular({amplitude})"),
            eval: Arc::new(move |x: &PhasePoint| c * (1.0 + amplitude * (2.0 * x.phi).cos())),
            log_holder: lipschitz * diameter.powf(5.0 / 6.0),
            sup_bound: c * (1.0 + amplitude),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &PhasePoint) -> f64 {
        (self.eval)(x)
    }

    /// `∫ ρ cos φ dr dφ` by the midpoint rule on an `n_r × n_phi` grid per disk.
    pub fn normalization(&self, config: &Configuration, n_r: usize, n_phi: usize) -> f64 {
        let mut total = 0.0;
        for (i, d) in config.disks().iter().enumerate() {
            let (hr, hp) = (d.perimeter() / n_r as f64, PI / n_phi as f64);
            let mut s = 0.0;
            for a in 0..n_r {
                let r = (a as f64 + 0.5) * hr;
                for b in 0..n_phi {
                    let phi = -FRAC_PI_2 + (b as f64 + 0.5) * hp;
                    s += self.eval(&PhasePoint::new(i, r, phi)) * phi.cos();
                }
            }
            total += s * hr * hp;
        }
        total
    }
}

/// One draw from `ρ cos φ dr dφ` using stream `rng`; returns the point and the
/// number of proposals spent.
pub(crate) fn draw<R: Rng + ?Sized>(d: &SmoothDensity, config: &Configuration, rng: &mut R) -> Result<(PhasePoint, u64)> {
    let cap = (10.0 / MIN_ACCEPTANCE) as u64;
    for tries in 1..=cap {
        let x = sample_invariant(config, rng);
        let rho = d.eval(&x);
        if rho > d.sup_bound {
            return Err(Error::EnvelopeTooTight(format!(
                "density {} = {rho:.4e} exceeds its sup bound {:.4e}",
                d.name, d.sup_bound
            )));
        }
        if rng.random::<f64>() * d.sup_bound < rho {
            return Ok((x, tries));
        }
    }
    Err(Error::EnvelopeTooTight(format!("no acceptance in {cap} proposals for {}", d.name)))
}

/// Expected acceptance `1 / (sup ρ · ∫ cos φ dr dφ)` of a normalized density.
pub(crate) fn check_envelope(d: &SmoothDensity, config: &Configuration) -> Result<()> {
    let rate = 1.0 / (d.sup_bound * invariant_mass(config));
    if rate < MIN_ACCEPTANCE {
        return Err(Error::EnvelopeTooTight(format!(
            "acceptance rate {rate:.2e} for {} below {MIN_ACCEPTANCE:.0e}",
            d.name
        )));
    }
    Ok(())
}

/// `n` points from `ρ cos φ dr dφ` by rejection against the envelope
/// `sup_bound · cos φ`; point `i` uses stream `i` of `seed`.
pub fn sample_density(d: &SmoothDensity, config: &Configuration, n: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    check_envelope(d, config)?;
    let mut tries = 0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (x, t) = draw(d, config, &mut substream(seed, i as u64))?;
        tries += t;
        out.push(x);
    }
    if n > 0 && (n as f64) < MIN_ACCEPTANCE * tries as f64 {
        return Err(Error::EnvelopeTooTight(format!("observed acceptance {}/{tries}", n)));
    }
    Ok(out)
}
