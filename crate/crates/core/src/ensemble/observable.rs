use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::billiard::PhasePoint;
use crate::error::{Error, Result};
use crate::geometry::Configuration;
use crate::sampling::invariant_mass;

type ObservableFn = dyn Fn(&PhasePoint) -> f64 + Send + Sync;

/// Test function on the collision space.
#[derive(Clone)]
pub enum Observable {
    CosPhi,
    /// `sin(2π r / |Γ_i|)` on disk `i`.
    SinArc,
    /// 1 on disk `i`, 0 elsewhere. Disks are separate components of the
    /// collision space, so this is already locally constant.
    DiskIndicator(usize),
    /// User function with declared range; its Hölder data are unknown.
    Custom {
        name: String,
        f: Arc<ObservableFn>,
        range: (f64, f64),
    },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Declared Hölder data `(γ, |f|_γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderData {
    pub exponent: f64,
    pub constant: f64,
}

impl Observable {
    /// `cos_phi`, `sin_arc` or `disk:<i>`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "cos_phi" => Ok(Self::CosPhi),
            "sin_arc" => Ok(Self::SinArc),
            _ => name
                .strip_prefix("disk:")
                .and_then(|i| i.parse().ok())
                .map(Self::DiskIndicator)
                .ok_or_else(|| Error::ParameterDomain(format!("unknown observable {name:?}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::CosPhi => "cos_phi".into(),
            Self::SinArc => "sin_arc".into(),
            Self::DiskIndicator(i) => format!("disk:{i}"),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, x: &PhasePoint, config: &Configuration) -> f64 {
        match self {
            Self::CosPhi => x.phi.cos(),
            Self::SinArc => (TAU * x.r / config.disk(x.disk).perimeter()).sin(),
            Self::DiskIndicator(i) => f64::from(u8::from(x.disk == *i)),
            Self::Custom { f, .. } => f(x),
        }
    }

    /// `(inf f, sup f)`.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Self::CosPhi | Self::DiskIndicator(_) => (0.0, 1.0),
            Self::SinArc => (-1.0, 1.0),
            Self::Custom { range, .. } => *range,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        let (a, b) = self.range();
        a.abs().max(b.abs())
    }

    /// `None` for custom observables: fits against them carry unvalidated constants.
    pub fn holder(&self, config: &Configuration) -> Option<HolderData> {
        let lip = match self {
            Self::CosPhi => 1.0,
            Self::SinArc => {
                TAU / config
                    .disks()
                    .iter()
                    .map(|d| d.perimeter())
                    .fold(f64::INFINITY, f64::min)
            }
            Self::DiskIndicator(_) => 0.0,
            Self::Custom { .. } => return None,
        };
        Some(HolderData {
            exponent: 1.0,
            constant: lip,
        })
    }

    /// `∫ f dμ` for the normalized invariant measure, by the midpoint rule.
    pub fn invariant_mean(&self, config: &Configuration) -> f64 {
        let (n_r, n_phi) = (400, 400);
        let mut total = 0.0;
        for (i, d) in config.disks().iter().enumerate() {
            let (hr, hp) = (d.perimeter() / n_r as f64, PI / n_phi as f64);
            let mut s = 0.0;
            for a in 0..n_r {
                let r = (a as f64 + 0.5) * hr;
                for b in 0..n_phi {
                    let phi = -FRAC_PI_2 + (b as f64 + 0.5) * hp;
                    s += self.eval(&PhasePoint::new(i, r, phi), config) * phi.cos();
                }
            }
            total += s * hr * hp;
        }
        total / invariant_mass(config)
    }
}
