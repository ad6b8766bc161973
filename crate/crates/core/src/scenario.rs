//! Finite sequences of configurations `K_0, K_1, …, K_n` with per-step
//! admissibility metadata, plus the stock generators used by the experiments.

use std::sync::Arc;

use serde::Serialize;

use crate::billiard::BilliardMap;
use crate::error::{Error, Result};
use crate::geometry::{admissibility, config_distance, AdmissibilityReport, Configuration, HorizonSpec};
use crate::vec2::Vec2;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    /// Index `k` of the map `F_k = F_{K_k, K_{k−1}}`.
    pub step: usize,
    /// `d(K_{k−1}, K_k)`.
    pub distance: f64,
    pub admissibility: AdmissibilityReport,
}

/// How consecutive configurations are generated from a base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScenarioKind {
    Fixed,
    /// Each center moves along its own fixed direction; `d(K_{k−1}, K_k) < eps`.
    Drift { eps: f64 },
    /// Each center runs around a circle of radius `amplitude`; `d(K_{k−1}, K_k) < eps`.
    Orbit { eps: f64, amplitude: f64 },
}

impl ScenarioKind {
    pub fn eps(&self) -> Option<f64> {
        match *self {
            ScenarioKind::Fixed => None,
            ScenarioKind::Drift { eps } | ScenarioKind::Orbit { eps, .. } => Some(eps),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Fixed => "fixed",
            ScenarioKind::Drift { .. } => "drift",
            ScenarioKind::Orbit { .. } => "orbit",
        }
    }
}

/// Immutable, validated configuration sequence; cheap to share between threads.
#[derive(Debug, Clone)]
pub struct ScenarioSequence {
    configs: Vec<Arc<Configuration>>,
    beta: f64,
    horizon: HorizonSpec,
    steps: Vec<StepReport>,
}

impl ScenarioSequence {
    /// Validates every consecutive pair. With `eps` given, also requires
    /// `d(K_{k−1}, K_k) < eps`.
    pub fn new(
        configs: Vec<Arc<Configuration>>,
        beta: f64,
        horizon: HorizonSpec,
        eps: Option<f64>,
    ) -> Result<Self> {
        horizon.validate()?;
        if configs.is_empty() {
            return Err(Error::ParameterDomain("scenario needs at least one configuration".into()));
        }
        if !(beta > 0.0) {
            return Err(Error::ParameterDomain(format!("beta = {beta} must be > 0")));
        }
        let mut steps = Vec::with_capacity(configs.len() - 1);
        for (k, pair) in configs.windows(2).enumerate() {
            let step = k + 1;
            let distance = config_distance(&pair[0], &pair[1])?;
            let adm = admissibility(&pair[0], &pair[1], beta, horizon)?;
            if !adm.admissible {
                return Err(Error::NotAdmissible {
                    step,
                    reason: format!(
                        "excursion {:.4e} (beta {:.4e}); escape time {:.4} vs tau_min - beta {:.4}",
                        adm.max_excursion,
                        beta,
                        adm.escape_time,
                        adm.tau_min - beta
                    ),
                });
            }
            if let Some(eps) = eps {
                if distance >= eps {
                    return Err(Error::NotAdmissible {
                        step,
                        reason: format!("step distance {distance:.4e} not below eps {eps:.4e}"),
                    });
                }
            }
            steps.push(StepReport {
                step,
                distance,
                admissibility: adm,
            });
        }
        if configs.len() == 1 {
            let adm = admissibility(&configs[0], &configs[0], beta, horizon)?;
            if !adm.admissible {
                return Err(Error::NotAdmissible {
                    step: 0,
                    reason: "escape time too long for tau_min - beta".into(),
                });
            }
        }
        Ok(Self {
            configs,
            beta,
            horizon,
            steps,
        })
    }

    /// `K_0 = … = K_n = base`.
    pub fn fixed(base: Configuration, beta: f64, horizon: HorizonSpec, n: usize) -> Result<Self> {
        let base = Arc::new(base);
        Self::new(vec![base; n + 1], beta, horizon, None)
    }

    pub fn generate(
        kind: ScenarioKind,
        base: Configuration,
        beta: f64,
        horizon: HorizonSpec,
        n: usize,
    ) -> Result<Self> {
        match kind {
            ScenarioKind::Fixed => Self::fixed(base, beta, horizon, n),
            ScenarioKind::Drift { eps } => {
                let speed = per_disk_step(eps, base.len())?;
                let dirs: Vec<Vec2> = (0..base.len())
                    .map(|i| Vec2::from_angle(0.3 + GOLDEN_ANGLE * i as f64))
                    .collect();
                Self::build(n, beta, horizon, eps, |k| moved(&base, |i| dirs[i] * (speed * k as f64)))
            }
            ScenarioKind::Orbit { eps, amplitude } => {
                let speed = per_disk_step(eps, base.len())?;
                if !(amplitude > 0.0 && speed <= 2.0 * amplitude) {
                    return Err(Error::ParameterDomain(format!(
                        "orbit amplitude {amplitude} too small for step {speed}"
                    )));
                }
                let omega = 2.0 * (speed / (2.0 * amplitude)).asin();
                Self::build(n, beta, horizon, eps, |k| {
                    moved(&base, |i| {
                        let psi = 0.3 + GOLDEN_ANGLE * i as f64;
                        (Vec2::from_angle(psi + omega * k as f64) - Vec2::from_angle(psi)) * amplitude
                    })
                })
            }
        }
    }

    /// Builds `K_0..K_n` in order and reports the earliest failing step,
    /// whether the failure is an invalid configuration or an inadmissible pair.
    fn build(
        n: usize,
        beta: f64,
        horizon: HorizonSpec,
        eps: f64,
        config: impl Fn(usize) -> Result<Arc<Configuration>>,
    ) -> Result<Self> {
        let mut configs = Vec::with_capacity(n + 1);
        let mut failure = None;
        for k in 0..=n {
            match config(k) {
                Ok(c) => configs.push(c),
                Err(e) => {
                    failure = Some(e.at_step(k));
                    break;
                }
            }
        }
        match failure {
            Some(e) if configs.is_empty() => Err(e),
            Some(e) => Self::new(configs, beta, horizon, Some(eps)).and(Err(e)),
            None => Self::new(configs, beta, horizon, Some(eps)),
        }
    }

    /// Number of maps `n` (the sequence holds `n + 1` configurations).
    pub fn len(&self) -> usize {
        self.configs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn horizon(&self) -> HorizonSpec {
        self.horizon
    }

    pub fn config(&self, k: usize) -> &Configuration {
        &self.configs[k]
    }

    pub fn steps(&self) -> &[StepReport] {
        &self.steps
    }

    pub fn max_step_distance(&self) -> f64 {
        self.steps.iter().map(|s| s.distance).fold(0.0, f64::max)
    }

    /// `F_k = F_{K_k, K_{k−1}}` for `1 <= k <= len()`.
    pub fn map(&self, k: usize) -> Result<BilliardMap<'_>> {
        if k == 0 || k > self.len() {
            return Err(Error::ParameterDomain(format!(
                "step {k} outside scenario of length {}",
                self.len()
            )));
        }
        Ok(BilliardMap::new_unchecked(
            &self.configs[k - 1],
            &self.configs[k],
            self.beta,
            self.horizon.t,
        ))
    }
}

fn per_disk_step(eps: f64, disks: usize) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::ParameterDomain(format!("eps = {eps} must be > 0")));
    }
    // quadrature over disks keeps the configuration distance just below eps
    Ok(0.999 * eps / (disks as f64).sqrt())
}

fn moved(base: &Configuration, delta: impl Fn(usize) -> Vec2) -> Result<Arc<Configuration>> {
    let disks = base
        .disks()
        .iter()
        .enumerate()
        .map(|(i, d)| crate::geometry::Disk::new(d.center + delta(i), d.radius, d.marker_angle))
        .collect();
    Ok(Arc::new(Configuration::new(disks, base.label())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Disk;

    fn base() -> Configuration {
        Configuration::new(
            vec![
                Disk::new(Vec2::new(0.25, 0.25), 0.2, 0.0),
                Disk::new(Vec2::new(0.75, 0.75), 0.2, 0.0),
            ],
            "two",
        )
        .unwrap()
    }

    const H: HorizonSpec = HorizonSpec { t: 2.0, phi: 0.05 };

    #[test]
    fn drift_steps_below_eps() {
        let s = ScenarioSequence::generate(ScenarioKind::Drift { eps: 0.01 }, base(), 0.05, H, 8).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.max_step_distance() < 0.01);
        assert!(s.max_step_distance() > 0.0099);
    }

    #[test]
    fn orbit_steps_below_eps() {
        let s = ScenarioSequence::generate(
            ScenarioKind::Orbit {
                eps: 0.01,
                amplitude: 0.02,
            },
            base(),
            0.05,
            H,
            50,
        )
        .unwrap();
        for st in s.steps() {
            assert!(st.distance < 0.01 && st.distance > 0.0099, "{st:?}");
        }
    }

    #[test]
    fn large_step_not_admissible() {
        let err = ScenarioSequence::generate(ScenarioKind::Drift { eps: 0.2 }, base(), 0.05, H, 3).unwrap_err();
        assert!(matches!(err, Error::NotAdmissible { step: 1, .. }), "{err}");
    }

    #[test]
    fn map_index_bounds() {
        let s = ScenarioSequence::fixed(base(), 0.05, H, 3).unwrap();
        assert!(s.map(0).is_err());
        assert!(s.map(3).is_ok());
        assert!(s.map(4).is_err());
    }
}
