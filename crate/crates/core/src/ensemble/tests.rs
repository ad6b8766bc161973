use std::time::Instant;

use super::*;
use crate::error::Error;
use crate::scenario::ScenarioSequence;
use crate::scene::Scene;

fn triple(n: usize) -> ScenarioSequence {
    let scene = Scene::from_json(include_str!("../../../../scenes/finite_horizon_triple.json"), "triple").unwrap();
    ScenarioSequence::fixed(scene.config, scene.beta, scene.horizon, n).unwrap()
}

/// CDF of `cos φ / 2` on `[−π/2, π/2]`.
fn phi_cdf(phi: f64) -> f64 {
    0.5 * (1.0 + phi.sin())
}

#[test]
fn uniform_phi_law_passes_ks() {
    let s = triple(0);
    let d = SmoothDensity::uniform(s.config(0));
    let n = 20_000;
    let mut phis: Vec<f64> = sample_density(&d, s.config(0), n, 7).unwrap().iter().map(|x| x.phi).collect();
    phis.sort_by(f64::total_cmp);
    let ks = phis
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let f = phi_cdf(p);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.36 / (n as f64).sqrt(), "KS {ks}");
}

#[test]
fn concentrated_density_and_determinism() {
    let s = triple(0);
    let config = s.config(0);
    let mass1 = 2.0 * config.disk(1).perimeter();
    let d = SmoothDensity::new("disk1", move |x| if x.disk == 1 { 1.0 / mass1 } else { 0.0 }, 0.0, 1.0 / mass1).unwrap();
    let a = sample_density(&d, config, 500, 3).unwrap();
    assert!(a.iter().all(|x| x.disk == 1));
    assert_eq!(a, sample_density(&d, config, 500, 3).unwrap());
    assert_ne!(a, sample_density(&d, config, 500, 4).unwrap());
}

#[test]
fn envelope_too_tight() {
    let s = triple(0);
    let d = SmoothDensity::new("spike", |_| 1.0, 0.0, 1e4).unwrap();
    assert!(matches!(sample_density(&d, s.config(0), 10, 0), Err(Error::EnvelopeTooTight(_))));
    let bad = SmoothDensity::new("liar", |_| 10.0, 0.0, 1.0).unwrap();
    assert!(matches!(sample_density(&bad, s.config(0), 10, 0), Err(Error::EnvelopeTooTight(_))));
}

#[test]
fn shipped_densities_are_normalized() {
    let s = triple(0);
    for d in [
        SmoothDensity::uniform(s.config(0)),
        SmoothDensity::sinusoidal(s.config(0), 0.5).unwrap(),
        SmoothDensity::angular(s.config(0), 0.5).unwrap(),
    ] {
        assert!((d.normalization(s.config(0), 200, 200) - 1.0).abs() < 1e-4, "{}", d.name());
    }
}

#[test]
fn constant_observable_and_equal_densities() {
    let s = triple(6);
    let u = SmoothDensity::uniform(s.config(0));
    let w = SmoothDensity::sinusoidal(s.config(0), 0.5).unwrap();
    let one = Observable::Custom {
        name: "one".into(),
        f: std::sync::Arc::new(|_| 1.0),
        range: (1.0, 1.0),
    };
    let d = memory_loss(&w, &u, &one, &s, 6, 2000, 1).unwrap();
    assert!(d.delta.iter().all(|&x| x == 0.0));
    assert!(d.constants_unvalidated && d.fit.is_none());
    let d = memory_loss(&w, &w, &Observable::CosPhi, &s, 6, 4000, 1).unwrap();
    for (x, e) in d.delta.iter().zip(&d.stderr) {
        assert!(*x <= 4.0 * e, "{x} vs {e}");
    }
    assert!(d.delta.iter().all(|&x| (0.0..=2.0).contains(&x)));
}

#[test]
fn fixed_map_preserves_invariant_means() {
    let s = triple(5);
    let u = SmoothDensity::uniform(s.config(0));
    for f in [Observable::CosPhi, Observable::SinArc, Observable::DiskIndicator(2)] {
        let n = 200_000;
        let d = memory_loss(&u, &u, &f, &s, 5, n, 11).unwrap();
        let exact = f.invariant_mean(s.config(0));
        // the standard deviation of f is at most its sup norm
        let se = f.sup_norm() / (n as f64).sqrt();
        for m in &d.estimate_mu1 {
            assert!((m - exact).abs() < 4.0 * se, "{} {m} vs {exact}", f.name());
        }
    }
}

#[test]
fn moments_after_one_step() {
    let s = triple(1);
    let checks = invariance_moments(&s, 1, 40_000, 5).unwrap();
    assert_eq!(checks.len(), 18);
    for c in &checks {
        assert!(c.z_score() < 4.5, "{c:?}");
    }
}

#[test]
fn correlation_estimators_agree() {
    let s = triple(4);
    let c = correlation_decay(&Observable::CosPhi, &Observable::SinArc, &s, 4, 20_000, 2).unwrap();
    assert!(c.disagreements(4.0).is_empty(), "{c:?}");
    let c = correlation_decay(&Observable::CosPhi, &Observable::CosPhi, &s, 2, 20_000, 2).unwrap();
    assert!(c.direct[0] > 0.0);
    let var = 2.0 / 3.0 - (std::f64::consts::PI / 4.0).powi(2);
    assert!((c.direct[0] - var).abs() < 4.0 * c.stderr_direct[0], "{} vs {var}", c.direct[0]);
}

#[test]
fn fit_recovers_geometric_decay() {
    let delta: Vec<f64> = (0..20).map(|n| 0.3 * 0.7f64.powi(n)).collect();
    let stderr = vec![1e-4; 20];
    let f = fit_decay(&delta, &stderr).unwrap();
    assert!((f.theta - 0.7).abs() < 1e-9 && (f.c - 0.3).abs() < 1e-9);
    assert!(!f.truncated && f.r_squared > 0.999_999);
    assert_eq!(f.range.0, 0);
    assert!(fit_decay(&[0.0; 10], &[1.0; 10]).is_none());
}

#[test]
fn coupling_second_mass_and_majorant() {
    let p = CouplingParams::uniform(0.1, 2.0, 0.9, 0, 0, 20, 3).unwrap();
    let r = coupling_recursion(&p).unwrap();
    assert_eq!(r.p[0], 1.0);
    assert_eq!(r.q[1], 0.9);
    assert!(r.q_majorizes);
    assert!(!r.spacing_condition);
}

#[test]
fn coupling_bound_under_spacing() {
    let (zeta, c, lambda) = (0.1, 2.0, 0.9);
    let spacing = delta_zero(zeta, c, lambda, 0, 0).unwrap();
    assert_eq!(spacing, 37);
    let p = CouplingParams::uniform(zeta, c, lambda, 0, 0, spacing, 1000).unwrap();
    let start = Instant::now();
    let r = coupling_recursion(&p).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(r.spacing_condition && r.q_majorizes);
    assert!(r.within_shifted_bound.iter().all(|&b| b));
    assert!(r.within_bound[1..].iter().all(|&b| b));
    assert!(!r.within_bound[0]);
    // k = 1 inherits P_1 = 1 > 1 − ½ζ̃
    assert!(!r.mass_bounds_ok[0] && r.mass_bounds_ok[1..].iter().all(|&b| b));
}

#[test]
fn coupling_vanishing_gap_terms() {
    let p = CouplingParams::uniform(0.2, 1.0, 1e-300, 0, 0, 3, 40).unwrap();
    let r = coupling_recursion(&p).unwrap();
    for (k, pk) in r.p.iter().enumerate() {
        assert!((pk - 0.8f64.powi(k as i32)).abs() < 1e-12);
    }
}

#[test]
fn coupling_domain_errors() {
    for (z, c, l) in [(0.0, 2.0, 0.5), (1.0, 2.0, 0.5), (0.1, 0.5, 0.5), (0.1, 2.0, 1.0), (0.1, 2.0, 0.0)] {
        assert!(matches!(
            CouplingParams::uniform(z, c, l, 0, 0, 10, 5),
            Err(Error::ParameterDomain(_))
        ));
    }
    // 0.1 + 2·0.9⁵ > 1 would leave a negative eligible mass
    let p = CouplingParams::uniform(0.1, 2.0, 0.9, 0, 0, 5, 5).unwrap();
    assert!(matches!(coupling_recursion(&p), Err(Error::ParameterDomain(_))));
}
