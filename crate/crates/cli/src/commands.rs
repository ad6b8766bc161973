use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::json;
use tdb_core::ensemble::{
    self, coupling_recursion as run_coupling, delta_zero, CouplingParams, DecayFit, Observable, SmoothDensity,
};
use tdb_core::transport::{stable_proxy_from, track_samples, MeasuredCurve, TrackSettings, UnstableCurve};
use tdb_core::{
    escape_time, horizon_check, tangent_audit as run_audit, AuditSettings, ConeSpec, HomogeneityScheme, HorizonResolution,
    ScenarioKind, ScenarioSequence, Scene,
};

use crate::manifest::{emit, num, CsvOut, RunManifest};
use crate::svg::{histogram, line_plot, Series};
use crate::{CliError, ScenarioName, SceneArgs};

impl SceneArgs {
    fn kind(&self) -> ScenarioKind {
        match self.scenario {
            ScenarioName::Fixed => ScenarioKind::Fixed,
            ScenarioName::Drift => ScenarioKind::Drift { eps: self.eps },
            ScenarioName::Orbit => ScenarioKind::Orbit {
                eps: self.eps,
                amplitude: self.amplitude,
            },
        }
    }

    fn describe(&self, n: usize) -> String {
        match self.kind() {
            ScenarioKind::Fixed => format!("fixed(n={n})"),
            ScenarioKind::Drift { eps } => format!("drift(eps={eps},n={n})"),
            ScenarioKind::Orbit { eps, amplitude } => format!("orbit(eps={eps},amplitude={amplitude},n={n})"),
        }
    }

    fn load(&self, n: usize) -> Result<(Scene, ScenarioSequence), CliError> {
        let scene = Scene::load(&self.scene)?;
        let seq = ScenarioSequence::generate(self.kind(), scene.config.clone(), scene.beta, scene.horizon, n)?;
        Ok((scene, seq))
    }

    fn manifest(&self, command: &str, n: usize, parameters: serde_json::Value, seed: Option<u64>) -> Result<RunManifest, CliError> {
        RunManifest::new(command, Some(&self.scene), Some(self.describe(n)), parameters, seed)
    }
}

fn write_svg(path: Option<&Path>, content: String) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, content).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn fit_footer(fit: &Option<DecayFit>) -> String {
    match fit {
        Some(f) => format!(
            "fit,C={},theta={},r2={},fit_range={}-{},decay_factor={},truncated={}",
            num(f.c),
            num(f.theta),
            num(f.r_squared),
            f.range.0,
            f.range.1,
            num(f.decay_factor),
            f.truncated
        ),
        None => "fit,none (fewer than three significant points after the peak)".into(),
    }
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Number of maps in the scenario.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 128)]
    pub base_points: usize,
    #[arg(long, default_value_t = 256)]
    pub directions: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn validate_scene(a: &ValidateArgs) -> Result<(), CliError> {
    let scene = Scene::load(&a.scene.scene)?;
    let config = &scene.config;
    let tau = config.tau_min();
    let esc = escape_time(config, scene.beta);
    let verdict = horizon_check(
        config,
        scene.horizon,
        HorizonResolution {
            base_points: a.base_points,
            directions: a.directions,
        },
    );
    let seq = ScenarioSequence::generate(a.scene.kind(), config.clone(), scene.beta, scene.horizon, a.steps);
    let manifest = a.scene.manifest(
        "validate-scene",
        a.steps,
        json!({"steps": a.steps, "base_points": a.base_points, "directions": a.directions}),
        None,
    )?;
    let w = verdict.witness;
    let mut rows: Vec<(&str, String)> = vec![
        ("label", config.label().to_string()),
        ("disks", config.len().to_string()),
        ("tau_min", num(tau)),
        ("beta", num(scene.beta)),
        ("escape_time", num(esc)),
        ("horizon_t", num(scene.horizon.t)),
        ("horizon_phi", num(scene.horizon.phi)),
        ("horizon_holds", verdict.holds.to_string()),
        ("witness_x", num(w.start.x)),
        ("witness_y", num(w.start.y)),
        ("witness_direction", num(w.direction_angle)),
        ("witness_best_angle", num(w.best_angle)),
        ("scenario", a.scene.describe(a.steps)),
    ];
    let seq = match seq {
        Ok(s) => {
            let worst = s
                .steps()
                .iter()
                .max_by(|x, y| x.admissibility.max_excursion.total_cmp(&y.admissibility.max_excursion));
            rows.push(("max_step_distance", num(s.max_step_distance())));
            if let Some(wst) = worst {
                rows.push(("worst_step", wst.step.to_string()));
                rows.push(("worst_excursion", num(wst.admissibility.max_excursion)));
            }
            rows.push(("admissible", "true".into()));
            Ok(s)
        }
        Err(e) => {
            rows.push(("admissible", "false".into()));
            Err(e)
        }
    };
    println!("scene {} ({} disks)", config.label(), config.len());
    println!("  tau_min {tau:.6}, escape time {esc:.6}, beta {}", scene.beta);
    println!(
        "  horizon (t={}, phi={}): {} (worst segment from ({:.4}, {:.4}) at angle {:.4}, contact angle {:.4})",
        scene.horizon.t,
        scene.horizon.phi,
        if verdict.holds { "holds" } else { "FAILS" },
        w.start.x,
        w.start.y,
        w.direction_angle,
        w.best_angle
    );
    match &seq {
        Ok(s) => println!(
            "  scenario {}: admissible, max step distance {:.4e}",
            a.scene.describe(a.steps),
            s.max_step_distance()
        ),
        Err(e) => println!("  scenario {}: {e}", a.scene.describe(a.steps)),
    }
    if let Some(out) = &a.out {
        let mut csv = CsvOut::new(&manifest, &["key", "value"]);
        for (k, v) in &rows {
            csv.row([*k, v.as_str()]);
        }
        emit(Some(out), &csv.finish())?;
    }
    seq?;
    if !verdict.holds {
        return Err(CliError::horizon(format!(
            "horizon condition (t={}, phi={}) fails at the reported witness",
            scene.horizon.t, scene.horizon.phi
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn tangent_audit(a: &AuditArgs) -> Result<(), CliError> {
    let (_, seq) = a.scene.load(a.steps)?;
    let settings = AuditSettings {
        samples: a.samples,
        seed: a.seed,
        ..AuditSettings::default()
    };
    let report = run_audit(&seq, &settings)?;
    let manifest = a.scene.manifest("tangent-audit", a.steps, json!({"samples": a.samples}), Some(a.seed))?;
    let mut csv = CsvOut::new(&manifest, &["key", "value"]);
    if let serde_json::Value::Object(map) = serde_json::to_value(report).expect("report serializes") {
        for (k, v) in map {
            let v = v.as_f64().map(num).unwrap_or_else(|| v.to_string());
            csv.row([k.as_str(), v.as_str()]);
        }
    }
    emit(a.out.as_deref(), &csv.finish())
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// Disk carrying the initial curve.
    #[arg(long, default_value_t = 0)]
    pub disk: usize,
    #[arg(long, default_value_t = 0.4)]
    pub r: f64,
    #[arg(long, default_value_t = 0.1)]
    pub phi: f64,
    /// Arclength of the initial curve.
    #[arg(long, default_value_t = 0.01)]
    pub length: f64,
    /// Stratified sample points followed on the curve.
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
}

impl CurveArgs {
    fn build(&self, seq: &ScenarioSequence) -> Result<UnstableCurve, CliError> {
        let cone = ConeSpec::for_scenario(seq)?;
        Ok(UnstableCurve::straight(
            seq.config(0),
            self.disk,
            (self.r, self.phi),
            cone.mid_slope(),
            self.length,
            11,
            &HomogeneityScheme::default(),
        )?)
    }

    fn json(&self) -> serde_json::Value {
        json!({"disk": self.disk, "r": self.r, "phi": self.phi, "length": self.length, "samples": self.samples})
    }
}

#[derive(Args, Debug)]
pub struct GrowthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Comma-separated eps grid; defaults to nine log-spaced values in [1e-4, 1e-2].
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn default_eps_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect()
}

pub fn curve_growth(a: &GrowthArgs) -> Result<(), CliError> {
    let (_, seq) = a.scene.load(a.n)?;
    let w = a.curve.build(&seq)?;
    let eps = if a.eps_grid.is_empty() { default_eps_grid() } else { a.eps_grid.clone() };
    let mc = MeasuredCurve::uniform(w.clone(), w.label_length())?;
    let settings = TrackSettings {
        samples: a.curve.samples,
        ..TrackSettings::default()
    };
    let rec = track_samples(&mc, &seq, 1, a.n, &eps, &settings)?;
    let mut params = a.curve.json();
    params["n"] = json!(a.n);
    params["eps_grid"] = json!(eps);
    let manifest = a.scene.manifest("curve-growth", a.n, params, None)?;
    let mut csv = CsvOut::new(
        &manifest,
        &["n", "eps", "measure_below_eps", "n_components", "z_value", "max_distortion", "kappa_hat_max"],
    );
    for st in &rec.steps {
        for (e, m) in eps.iter().zip(&st.measure_below) {
            csv.row([
                st.n.to_string(),
                num(*e),
                num(*m),
                st.live_components.to_string(),
                num(st.z_value),
                num(st.max_distortion),
                num(st.kappa_hat_max),
            ]);
        }
    }
    emit(a.out.as_deref(), &csv.finish())?;
    let picked = [0usize, eps.len() / 2, eps.len() - 1];
    let names: Vec<String> = picked.iter().map(|&j| format!("eps={:.1e}", eps[j])).collect();
    let series: Vec<Series<'_>> = picked
        .iter()
        .zip(&names)
        .map(|(&j, name)| Series {
            name,
            points: rec.steps.iter().map(|s| (s.n as f64, s.measure_below[j])).collect(),
        })
        .collect();
    write_svg(a.svg.as_deref(), line_plot("m_W{r < eps}", "n", &series, true))
}

#[derive(Args, Debug)]
pub struct ProxyArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Horizon N of the minimum over n.
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c_norm: f64,
    /// Expansion rate; estimated by a short tangent audit when omitted.
    #[arg(long)]
    pub lambda_hat: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn stable_proxy(a: &ProxyArgs) -> Result<(), CliError> {
    let (_, seq) = a.scene.load(a.horizon.max(1))?;
    let lambda_hat = match a.lambda_hat {
        Some(l) => l,
        None => {
            run_audit(
                &seq,
                &AuditSettings {
                    samples: 10_000,
                    orbits: 8,
                    orbit_len: 500,
                    ..AuditSettings::default()
                },
            )?
            .lambda_hat
        }
    };
    let w = a.curve.build(&seq)?;
    let mc = MeasuredCurve::uniform(w.clone(), w.label_length())?;
    let settings = TrackSettings {
        samples: a.curve.samples,
        ..TrackSettings::default()
    };
    let rec = track_samples(&mc, &seq, 1, a.horizon, &[], &settings)?;
    let u = stable_proxy_from(&rec, a.c_norm, lambda_hat);
    let mut params = a.curve.json();
    params["horizon"] = json!(a.horizon);
    params["c_norm"] = json!(a.c_norm);
    params["lambda_hat"] = json!(lambda_hat);
    let manifest = a.scene.manifest("stable-proxy", a.horizon, params, None)?;
    let mut csv = CsvOut::new(&manifest, &["sample", "label", "u_s"]);
    for (j, (l, v)) in rec.sample_labels.iter().zip(&u).enumerate() {
        csv.row([j.to_string(), num(*l), num(*v)]);
    }
    emit(a.out.as_deref(), &csv.finish())?;
    let logs: Vec<f64> = u.iter().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
    write_svg(a.svg.as_deref(), histogram("u^s histogram", "log10 u^s", &logs, 30))
}

#[derive(Clone, Copy, ValueEnum, Debug)]
pub enum DensityName {
    /// 1 + a cos 2φ
    Angular,
    /// 1 + a sin(2π r / |Γ_i|)
    Sinusoidal,
}

#[derive(Args, Debug)]
pub struct MemoryArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// cos_phi, sin_arc or disk:<i>.
    #[arg(long, default_value = "cos_phi")]
    pub observable: String,
    /// First density; the second is the normalized invariant density.
    #[arg(long, value_enum, default_value = "angular")]
    pub density: DensityName,
    #[arg(long, default_value_t = 0.75)]
    pub density_amplitude: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn memory_loss(a: &MemoryArgs) -> Result<(), CliError> {
    let (_, seq) = a.scene.load(a.n_max)?;
    let config = seq.config(0);
    let mu1 = match a.density {
        DensityName::Angular => SmoothDensity::angular(config, a.density_amplitude)?,
        DensityName::Sinusoidal => SmoothDensity::sinusoidal(config, a.density_amplitude)?,
    };
    let mu2 = SmoothDensity::uniform(config);
    let f = Observable::parse(&a.observable)?;
    let d = ensemble::memory_loss(&mu1, &mu2, &f, &seq, a.n_max, a.particles, a.seed)?;
    let manifest = a.scene.manifest(
        "memory-loss",
        a.n_max,
        json!({
            "n_max": a.n_max, "particles": a.particles, "observable": a.observable,
            "mu1": mu1.name(), "mu2": mu2.name(),
        }),
        Some(a.seed),
    )?;
    let mut csv = CsvOut::new(&manifest, &["n", "estimate_mu1", "estimate_mu2", "delta", "stderr"]);
    for i in 0..d.n.len() {
        csv.row([
            d.n[i].to_string(),
            num(d.estimate_mu1[i]),
            num(d.estimate_mu2[i]),
            num(d.delta[i]),
            num(d.stderr[i]),
        ]);
    }
    csv.footer(fit_footer(&d.fit));
    csv.footer(format!("max_step_distance,{}", num(seq.max_step_distance())));
    if d.constants_unvalidated {
        csv.footer("constants_unvalidated,true".into());
    }
    if d.fit.is_some_and(|f| f.truncated) {
        eprintln!("warning: delta reached the Monte-Carlo noise floor; fit range truncated");
    }
    emit(a.out.as_deref(), &csv.finish())?;
    let series = [
        Series {
            name: "delta",
            points: d.n.iter().zip(&d.delta).map(|(n, v)| (*n as f64, *v)).collect(),
        },
        Series {
            name: "3 stderr",
            points: d.n.iter().zip(&d.stderr).map(|(n, v)| (*n as f64, 3.0 * v)).collect(),
        },
    ];
    write_svg(a.svg.as_deref(), line_plot("memory loss", "n", &series, true))
}

#[derive(Args, Debug)]
pub struct CorrelationArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub particles: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Observable f evaluated at time n.
    #[arg(long, default_value = "cos_phi")]
    pub observable: String,
    /// Observable g evaluated at time 0.
    #[arg(long, default_value = "cos_phi")]
    pub observable_g: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

pub fn correlation(a: &CorrelationArgs) -> Result<(), CliError> {
    let (_, seq) = a.scene.load(a.n_max)?;
    let f = Observable::parse(&a.observable)?;
    let g = Observable::parse(&a.observable_g)?;
    let c = ensemble::correlation_decay(&f, &g, &seq, a.n_max, a.particles, a.seed)?;
    let manifest = a.scene.manifest(
        "correlation",
        a.n_max,
        json!({"n_max": a.n_max, "particles": a.particles, "f": a.observable, "g": a.observable_g}),
        Some(a.seed),
    )?;
    let mut csv = CsvOut::new(
        &manifest,
        &["n", "direct", "reduced", "stderr_direct", "stderr_reduced", "stderr_difference", "agree"],
    );
    let bad = c.disagreements(3.0);
    for i in 0..c.n.len() {
        csv.row([
            c.n[i].to_string(),
            num(c.direct[i]),
            num(c.reduced[i]),
            num(c.stderr_direct[i]),
            num(c.stderr_reduced[i]),
            num(c.stderr_difference[i]),
            (!bad.contains(&i)).to_string(),
        ]);
    }
    csv.footer(fit_footer(&c.fit));
    csv.footer(format!("g_mean,{}", num(c.g_mean)));
    csv.footer(format!("shift_a,{}", num(c.shift)));
    emit(a.out.as_deref(), &csv.finish())?;
    let series = [Series {
        name: "|C(n)|",
        points: c.n.iter().zip(&c.direct).map(|(n, v)| (*n as f64, v.abs())).collect(),
    }];
    write_svg(a.svg.as_deref(), line_plot("correlation decay", "n", &series, true))
}

#[derive(Args, Debug)]
pub struct CouplingArgs {
    #[arg(long, default_value_t = 0.1)]
    pub zeta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,
    /// Spacing of coupling times; the smallest admissible spacing when omitted.
    #[arg(long)]
    pub spacing: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub s: u64,
    #[arg(long, default_value_t = 0)]
    pub r: u64,
    #[arg(long, default_value_t = 0)]
    pub n_p: u64,
    #[arg(long, default_value_t = 1000)]
    pub k_max: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn coupling_recursion(a: &CouplingArgs) -> Result<(), CliError> {
    let spacing = match a.spacing {
        Some(s) => s,
        None => delta_zero(a.zeta, a.c, a.lambda, a.s, a.n_p)?,
    };
    let params = CouplingParams::uniform(a.zeta, a.c, a.lambda, a.s, a.r, spacing, a.k_max)?;
    let rep = run_coupling(&params)?;
    let manifest = RunManifest::new(
        "coupling-recursion",
        None,
        None,
        json!({"zeta": a.zeta, "c": a.c, "lambda": a.lambda, "spacing": spacing, "s": a.s, "r": a.r, "k_max": a.k_max}),
        None,
    )?;
    let mut csv = CsvOut::new(
        &manifest,
        &["k", "P_k", "Q_k", "bound", "ok", "ok_shifted", "remainder", "coupled", "mass_bounds_ok"],
    );
    for i in 0..rep.k.len() {
        csv.row([
            rep.k[i].to_string(),
            num(rep.p[i]),
            num(rep.q[i]),
            num(rep.bound[i]),
            rep.within_bound[i].to_string(),
            rep.within_shifted_bound[i].to_string(),
            num(rep.remainder[i]),
            num(rep.coupled[i]),
            rep.mass_bounds_ok[i].to_string(),
        ]);
    }
    csv.footer(format!("q_majorizes,{}", rep.q_majorizes));
    csv.footer(format!("spacing_condition,{}", rep.spacing_condition));
    csv.footer(format!("delta,{}", rep.delta));
    emit(a.out.as_deref(), &csv.finish())
}
