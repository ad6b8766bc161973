//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a criterion fails that is not listed in `KNOWN_FAILURES`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use tdb_core::ensemble::{
    coupling_recursion, delta_zero, invariance_moments, memory_loss, CouplingParams, Observable, SmoothDensity,
};
use tdb_core::sampling::{sample_invariant, substream};
use tdb_core::stats::linear_fit;
use tdb_core::transport::{push_curve, track_samples, MeasuredCurve, PushSettings, TrackSettings, UnstableCurve};
use tdb_core::{
    escape_time, tangent_audit, AuditReport, AuditSettings, ConeSpec, HomogeneityScheme, ScenarioKind,
    ScenarioSequence, Scene,
};

/// Criteria expected to fail, with the reason. They are still run and printed.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    8,
    "P_1 = 1 exceeds 1 - zeta/2 = 0.95, so P_k <= (1 - zeta/2)^k cannot hold at k = 1 whatever the spacing; \
     it holds exactly for every k in 2..=1000 and the shifted form (1 - zeta/2)^(k-1) holds for all k",
)];

/// Memory-loss fit frozen from the first validated run (seed 1, 10^6 particles).
const MEMORY_BASELINE_THETA: f64 = 0.0361;
const MEMORY_BASELINE_C: f64 = 0.0788;
const BASELINE_TOLERANCE: f64 = 0.10;

const DRIFT_EPS: f64 = 1e-3;

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scene_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

const SCENES: [&str; 2] = ["finite_horizon_triple.json", "finite_horizon_two_disks.json"];

fn scenario(name: &str, kind: ScenarioKind, n: usize) -> tdb_core::Result<ScenarioSequence> {
    let scene = Scene::load(scene_path(name))?;
    ScenarioSequence::generate(kind, scene.config, scene.beta, scene.horizon, n)
}

fn drift(name: &str, n: usize) -> tdb_core::Result<ScenarioSequence> {
    scenario(name, ScenarioKind::Drift { eps: DRIFT_EPS }, n)
}

struct Audit {
    scene: &'static str,
    report: AuditReport,
    seconds: f64,
}

fn audits() -> tdb_core::Result<Vec<Audit>> {
    SCENES
        .iter()
        .map(|&scene| {
            let seq = drift(scene, 5)?;
            let start = Instant::now();
            let report = tangent_audit(
                &seq,
                &AuditSettings {
                    samples: 110_000,
                    seed: 7,
                    ..AuditSettings::default()
                },
            )?;
            Ok(Audit {
                scene,
                report,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

fn regular(r: &AuditReport) -> usize {
    r.n_samples - r.skipped_no_collision - r.skipped_singular
}

fn determinant(audits: &[Audit]) -> Outcome {
    let pass = audits
        .iter()
        .all(|a| regular(&a.report) >= 100_000 && a.report.det_max_abs_err < 1e-10 && a.seconds < 60.0);
    let detail = audits
        .iter()
        .map(|a| {
            format!(
                "{}: {} regular, max err {:.2e}, {:.1}s",
                a.scene,
                regular(&a.report),
                a.report.det_max_abs_err,
                a.seconds
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn jacobian(audits: &[Audit]) -> Outcome {
    let pass = audits
        .iter()
        .all(|a| a.report.fd_samples > 0 && a.report.fd_max_rel_err < 1e-4 && a.seconds < 120.0);
    let detail = audits
        .iter()
        .map(|a| {
            format!(
                "{}: {} fd samples, max rel err {:.2e}",
                a.scene, a.report.fd_samples, a.report.fd_max_rel_err
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn cones(audits: &[Audit]) -> Outcome {
    let pass = audits.iter().all(|a| {
        regular(&a.report) >= 100_000 && a.report.cone_violations == 0 && a.report.stable_cone_violations == 0
    });
    let detail = audits
        .iter()
        .map(|a| {
            format!(
                "{}: unstable {} / stable {} violations",
                a.scene, a.report.cone_violations, a.report.stable_cone_violations
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn reversal_and_moments() -> tdb_core::Result<Outcome> {
    let seq = scenario(SCENES[0], ScenarioKind::Fixed, 3)?;
    let map = seq.map(1)?;
    let config = seq.config(0);
    let mut worst: f64 = 0.0;
    for i in 0..10_000u64 {
        let x = sample_invariant(config, &mut substream(41, i));
        let y = map.step(x)?.image;
        let back = map.step(y.reversed())?.image.reversed();
        let l = config.disk(x.disk).perimeter();
        let dr = (back.r - x.r).rem_euclid(l);
        let err = if back.disk != x.disk {
            f64::INFINITY
        } else {
            dr.min(l - dr).max((back.phi - x.phi).abs())
        };
        worst = worst.max(err);
    }
    let moments = invariance_moments(&seq, 3, 1_000_000, 5)?;
    let z_max = moments.iter().map(|m| m.z_score().abs()).fold(0.0, f64::max);
    Ok(outcome(
        worst < 1e-9 && z_max < 3.0,
        format!(
            "reversal max err {worst:.2e} over 10^4 points; {} moments after 3 steps, max |z| = {z_max:.2}",
            moments.len()
        ),
    ))
}

fn changeover() -> tdb_core::Result<Outcome> {
    let seq = drift(SCENES[0], 2)?;
    let map = seq.map(1)?;
    let source = seq.config(0);
    let (lo, hi) = (escape_time(source, seq.beta()), source.tau_min() - seq.beta());
    if !(lo < hi) {
        return Ok(outcome(false, format!("empty swap window ({lo}, {hi})")));
    }
    let mut mismatches = 0;
    for i in 0..10_000u64 {
        let mut rng = substream(43, i);
        let x = sample_invariant(source, &mut rng);
        let floor = lo + (hi - lo) * rng.random_range(1e-9..1.0 - 1e-9);
        let a = map.step(x)?;
        let b = map.step_with_floor(x, floor)?;
        let same = a.image.disk == b.image.disk
            && a.image.r.to_bits() == b.image.r.to_bits()
            && a.image.phi.to_bits() == b.image.phi.to_bits()
            && a.flight_time.to_bits() == b.flight_time.to_bits();
        mismatches += !same as usize;
    }
    Ok(outcome(
        mismatches == 0,
        format!("swap window ({lo:.4}, {hi:.4}); {mismatches} of 10^4 images differ bitwise"),
    ))
}

fn transport_conservation() -> tdb_core::Result<Outcome> {
    let seq = drift(SCENES[0], 2)?;
    let map = seq.map(1)?;
    let cone = ConeSpec::for_scenario(&seq)?;
    let scheme = HomogeneityScheme::default();
    let config = seq.config(0);
    let (mut pushed, mut mass_err, mut label_err, mut bad_components, mut components) = (0, 0f64, 0f64, 0, 0);
    let mut attempt = 0u64;
    while pushed < 1000 {
        attempt += 1;
        let mut rng = substream(47, attempt);
        let disk = rng.random_range(0..config.len());
        let r = rng.random_range(0.0..config.disk(disk).perimeter());
        let phi = rng.random_range(-1.2..1.2);
        let length = 10f64.powf(rng.random_range(-3.0..-1.3));
        let Ok(w) = UnstableCurve::straight(config, disk, (r, phi), cone.mid_slope(), length, 9, &scheme) else {
            continue;
        };
        let (a, b) = (rng.random_range(-0.5..0.5), rng.random_range(1.0..10.0));
        let mc = MeasuredCurve::with_density(w, |l| 1.0 + a * (b * l / length).sin(), Some(1.0))?;
        let out = push_curve(&mc, &map, &PushSettings::default())?;
        pushed += 1;
        mass_err = mass_err.max(((out.kept_mass() + out.dropped_mass()) - mc.mass).abs() / mc.mass);
        let mut ranges: Vec<(f64, f64)> = out.components.iter().map(|c| c.curve.label_range).collect();
        ranges.extend(out.dropped.iter().map(|d| d.label_range));
        ranges.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (lo, hi) = mc.curve.label_range;
        let covered: f64 = ranges.iter().map(|(p, q)| q - p).sum();
        let gaps: f64 = ranges.windows(2).map(|p| (p[1].0 - p[0].1).abs()).sum();
        let ends = (ranges[0].0 - lo).abs() + (ranges.last().expect("nonempty").1 - hi).abs();
        label_err = label_err.max(((covered - (hi - lo)).abs() + gaps + ends) / (hi - lo));
        for c in &out.components {
            components += 1;
            if c.curve.check_homogeneous(&scheme).is_err() || !c.curve.cone_compliant(&cone) {
                bad_components += 1;
            }
        }
    }
    Ok(outcome(
        mass_err < 1e-8 && label_err < 1e-8 && bad_components == 0,
        format!(
            "{pushed} curves, {components} components; max rel mass err {mass_err:.2e}, \
             max rel label partition err {label_err:.2e}, {bad_components} non-homogeneous or off-cone"
        ),
    ))
}

fn growth_shape() -> tdb_core::Result<Outcome> {
    let seq = drift(SCENES[0], 30)?;
    let cone = ConeSpec::for_scenario(&seq)?;
    let w = UnstableCurve::straight(
        seq.config(0),
        0,
        (0.4, 0.1),
        cone.mid_slope(),
        0.01,
        11,
        &HomogeneityScheme::default(),
    )?;
    let eps: Vec<f64> = (0..9).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let mc = MeasuredCurve::uniform(w.clone(), w.label_length())?;
    let settings = TrackSettings {
        samples: 300,
        ..TrackSettings::default()
    };
    let rec = track_samples(&mc, &seq, 1, 30, &eps, &settings)?;
    let fit = |n: usize| linear_fit(&eps, &rec.steps[n].measure_below);
    let (f20, f30) = (fit(20), fit(30));
    let ratio = f20.slope / f30.slope;
    Ok(outcome(
        f20.r_squared > 0.95 && f30.r_squared > 0.95 && (0.5..=2.0).contains(&ratio),
        format!(
            "n=20: slope {:.4}, R2 {:.4}; n=30: slope {:.4}, R2 {:.4}; ratio {ratio:.3}",
            f20.slope, f20.r_squared, f30.slope, f30.r_squared
        ),
    ))
}

fn coupling() -> tdb_core::Result<Outcome> {
    let start = Instant::now();
    let spacing = delta_zero(0.1, 2.0, 0.9, 0, 0)?;
    let params = CouplingParams::uniform(0.1, 2.0, 0.9, 0, 0, spacing, 1000)?;
    let report = coupling_recursion(&params)?;
    let seconds = start.elapsed().as_secs_f64();
    let failing: Vec<usize> = (0..report.within_bound.len())
        .filter(|&i| !report.within_bound[i])
        .map(|i| i + 1)
        .collect();
    let q2_exact = report.q[1] == 0.9;
    let shifted = report.within_shifted_bound.iter().all(|&b| b);
    Ok(outcome(
        failing.is_empty() && q2_exact && report.q_majorizes && seconds < 1.0,
        format!(
            "spacing {spacing}, k <= {}: bound fails at k = {failing:?}, shifted bound holds for all k: {shifted}, \
             Q majorizes P: {}, Q_2 = {} (exact 0.9: {q2_exact}), {seconds:.3}s",
            params.k_max(), report.q_majorizes, report.q[1]
        ),
    ))
}

fn memory() -> tdb_core::Result<Outcome> {
    let seq = drift(SCENES[0], 10)?;
    let max_step = seq.max_step_distance();
    let config = seq.config(0);
    let mu1 = SmoothDensity::angular(config, 0.75)?;
    let mu2 = SmoothDensity::uniform(config);
    let start = Instant::now();
    let s = memory_loss(&mu1, &mu2, &Observable::CosPhi, &seq, 10, 1_000_000, 1)?;
    let seconds = start.elapsed().as_secs_f64();
    let Some(fit) = s.fit else {
        return Ok(outcome(false, format!("no significant decay range; delta {:?}", s.delta)));
    };
    let near = |x: f64, base: f64| ((x - base) / base).abs() <= BASELINE_TOLERANCE;
    let baseline_ok = near(fit.theta, MEMORY_BASELINE_THETA) && near(fit.c, MEMORY_BASELINE_C);
    Ok(outcome(
        max_step < DRIFT_EPS && fit.decay_factor >= 10.0 && fit.theta < 1.0 && fit.r_squared > 0.9 && baseline_ok,
        format!(
            "max step distance {max_step:.2e}; fit range {}..{}, decay factor {:.1}, theta {:.4}, C {:.4}, R2 {:.4}; \
             baseline theta {MEMORY_BASELINE_THETA}, C {MEMORY_BASELINE_C} (+-10%): {baseline_ok}; {seconds:.1}s",
            fit.range.0, fit.range.1, fit.decay_factor, fit.theta, fit.c, fit.r_squared
        ),
    ))
}

fn run_tdb(args: &[&str], threads: usize) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tdb"))
        .args(args)
        .env("TDB_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(out.stdout)
}

fn determinism() -> Result<Outcome, String> {
    let scene = scene_path(SCENES[0]);
    let scene = scene.to_str().expect("utf-8 path");
    let common = ["--scene", scene, "--scenario", "drift"];
    let runs: [(&str, Vec<&str>); 4] = [
        ("memory-loss", vec!["--n-max", "6", "--particles", "100000", "--seed", "3"]),
        ("correlation", vec!["--n-max", "4", "--particles", "100000", "--seed", "3"]),
        ("curve-growth", vec!["--n", "6", "--samples", "60"]),
        ("tangent-audit", vec!["--samples", "20000", "--steps", "3"]),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (command, extra) in &runs {
        let args: Vec<&str> = std::iter::once(*command).chain(common).chain(extra.iter().copied()).collect();
        let outputs = [1, 4, 8].map(|t| run_tdb(&args, t));
        let outputs: Vec<Vec<u8>> = outputs.into_iter().collect::<Result<_, _>>()?;
        let same = outputs.windows(2).all(|p| p[0] == p[1]);
        pass &= same;
        details.push(format!("{command}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    Ok(outcome(pass, format!("threads 1/4/8: {}", details.join(", "))))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let started = Instant::now();
    let audits = audits();
    let from = |r: tdb_core::Result<Outcome>| r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "determinant identity", Box::new(|| match &audits {
            Ok(a) => determinant(a),
            Err(e) => outcome(false, format!("error: {e}")),
        })),
        (2, "jacobian vs finite differences", Box::new(|| match &audits {
            Ok(a) => jacobian(a),
            Err(e) => outcome(false, format!("error: {e}")),
        })),
        (3, "cone invariance", Box::new(|| match &audits {
            Ok(a) => cones(a),
            Err(e) => outcome(false, format!("error: {e}")),
        })),
        (4, "time reversal and measure invariance", Box::new(move || from(reversal_and_moments()))),
        (5, "changeover independence", Box::new(move || from(changeover()))),
        (6, "curve transport conservation", Box::new(move || from(transport_conservation()))),
        (7, "growth statistics shape", Box::new(move || from(growth_shape()))),
        (8, "coupling recursion bound", Box::new(move || from(coupling()))),
        (9, "memory loss", Box::new(move || from(memory()))),
        (10, "determinism across thread counts", Box::new(|| {
            determinism().unwrap_or_else(|e| outcome(false, format!("error: {e}")))
        })),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in &criteria {
        let t = Instant::now();
        let o = check();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| k == id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (known)",
            (false, None) => "FAIL",
        };
        println!("[{tag}] {id:>2} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        if let (false, Some((_, why))) = (o.pass, known) {
            println!("            known failure: {why}");
        }
        if !o.pass && known.is_none() {
            unexpected.push(*id);
        }
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
