//! `tdb`: command-line runner for the moving-scatterer billiard library.

mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tdb_core::Error;

const EXIT_CODES: &str = "Exit codes: 0 ok, 1 usage or parameters, 2 geometry (invalid or overlapping disks), \
3 admissibility (NotAdmissible), 4 horizon (horizon check failed or no collision within horizon), \
5 runtime or numeric failure. TDB_THREADS caps the worker threads.";

#[derive(Parser)]
#[command(name = "tdb", version, about = "Dispersing billiards with slowly moving scatterers on the 2-torus", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry, horizon and admissibility report for a scene and scenario.
    ValidateScene(commands::ValidateArgs),
    /// Determinant, finite-difference and cone checks of the derivative.
    TangentAudit(commands::AuditArgs),
    /// Growth statistics m_W{r_{W,n} < eps} of a pushed unstable curve.
    CurveGrowth(commands::GrowthArgs),
    /// Stable-manifold size proxy at sample points of an unstable curve.
    StableProxy(commands::ProxyArgs),
    /// Difference of the pushed integrals of an observable under two densities.
    MemoryLoss(commands::MemoryArgs),
    /// Correlation decay for the invariant measure.
    Correlation(commands::CorrelationArgs),
    /// Exact iteration of the coupling-mass recursion.
    CouplingRecursion(commands::CouplingArgs),
}

#[derive(Clone, Copy, ValueEnum, Debug)]
pub enum ScenarioName {
    Fixed,
    Drift,
    Orbit,
}

#[derive(Args, Clone, Debug)]
pub struct SceneArgs {
    /// Scene JSON file.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    pub scenario: ScenarioName,
    /// Bound on the per-step configuration distance (drift and orbit).
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Orbit radius of each center (orbit only).
    #[arg(long, default_value_t = 0.01)]
    pub amplitude: f64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 5,
            message: message.into(),
        }
    }

    pub fn horizon(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Parse(_) | Error::ParameterDomain(_) => 1,
            Error::InvalidDisk { .. } | Error::OverlappingScatterers { .. } | Error::MismatchedScattererCount { .. } => 2,
            Error::NotAdmissible { .. } => 3,
            Error::InvalidHorizon(_) | Error::NoCollisionWithinHorizon { .. } => 4,
            _ => 5,
        };
        let name = match e.root() {
            Error::InvalidDisk { .. } => "InvalidDisk",
            Error::OverlappingScatterers { .. } => "OverlappingScatterers",
            Error::MismatchedScattererCount { .. } => "MismatchedScattererCount",
            Error::InvalidHorizon(_) => "InvalidHorizon",
            Error::NoCollisionWithinHorizon { .. } => "NoCollisionWithinHorizon",
            Error::NotAdmissible { .. } => "NotAdmissible",
            Error::SingularCollision { .. } => "SingularCollision",
            Error::VerticalImage => "VerticalImage",
            Error::EnvelopeTooTight(_) => "EnvelopeTooTight",
            Error::ParameterDomain(_) => "ParameterDomain",
            Error::Parse(_) => "ParseError",
            Error::AtStep { .. } => unreachable!("root strips step annotations"),
        };
        Self {
            code,
            message: format!("{name}: {e}"),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TDB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::usage(format!("TDB_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::ValidateScene(a) => commands::validate_scene(&a),
        Command::TangentAudit(a) => commands::tangent_audit(&a),
        Command::CurveGrowth(a) => commands::curve_growth(&a),
        Command::StableProxy(a) => commands::stable_proxy(&a),
        Command::MemoryLoss(a) => commands::memory_loss(&a),
        Command::Correlation(a) => commands::correlation(&a),
        Command::CouplingRecursion(a) => commands::coupling_recursion(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
