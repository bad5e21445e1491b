mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::Parser;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

impl From<centralflow::Error> for CliError {
    fn from(e: centralflow::Error) -> Self {
        match e {
            centralflow::Error::Config(msg) => CliError::Config(msg),
            centralflow::Error::Numerical(msg) => CliError::Numerical(msg),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Diagnose,
    LinearizeCheck,
    NashMoser,
    Stability,
    Lifespan,
    Convergence,
    SmoothingCheck,
    CrossSolver,
    ConservationSuite,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Diagnose => "diagnose",
            Subcommand::LinearizeCheck => "linearize-check",
            Subcommand::NashMoser => "nash-moser",
            Subcommand::Stability => "stability",
            Subcommand::Lifespan => "lifespan",
            Subcommand::Convergence => "convergence",
            Subcommand::SmoothingCheck => "smoothing-check",
            Subcommand::CrossSolver => "cross-solver",
            Subcommand::ConservationSuite => "conservation-suite",
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "centralflow",
    version,
    about = "Closed curves moving under a central potential with inner pressure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Integrate the flow and dump the nodes
    Simulate(RunArgs),
    /// Integrate the flow and record energies, momenta and volume bounds
    Diagnose(RunArgs),
    /// Central differences of the force against the linearized operator
    LinearizeCheck(RunArgs),
    /// Solve on [0, T] with the Nash-Moser iteration
    NashMoser(RunArgs),
    /// Dependence on the data for small perturbations
    Stability(RunArgs),
    /// Runs of length T/sqrt(eps) for small eps
    Lifespan(RunArgs),
    /// Time-step and grid refinement study
    Convergence(RunArgs),
    /// Empirical constants of the smoothing operators
    SmoothingCheck(RunArgs),
    /// Nash-Moser solution against the direct integrator
    CrossSolver(RunArgs),
    /// Conserved quantities over the standard suite
    ConservationSuite(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON config merged over the defaults
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `sim.rho=2.5`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Parent directory of the run directory (overrides output.dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the random data (overrides experiment.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Only log warnings and errors
    #[arg(long)]
    quiet: bool,
    /// Print the resolved config and exit
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (Subcommand, RunArgs) {
        match self {
            Command::Simulate(a) => (Subcommand::Simulate, a),
            Command::Diagnose(a) => (Subcommand::Diagnose, a),
            Command::LinearizeCheck(a) => (Subcommand::LinearizeCheck, a),
            Command::NashMoser(a) => (Subcommand::NashMoser, a),
            Command::Stability(a) => (Subcommand::Stability, a),
            Command::Lifespan(a) => (Subcommand::Lifespan, a),
            Command::Convergence(a) => (Subcommand::Convergence, a),
            Command::SmoothingCheck(a) => (Subcommand::SmoothingCheck, a),
            Command::CrossSolver(a) => (Subcommand::CrossSolver, a),
            Command::ConservationSuite(a) => (Subcommand::ConservationSuite, a),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    started: String,
    finished: String,
    exit_code: u8,
    status: &'static str,
    error: Option<String>,
    config: Option<&'a config::Config>,
    files: Vec<String>,
}

/// `<parent>/<command>-<UTC timestamp>`, with a counter suffix if taken.
fn fresh_run_dir(
    parent: &Path,
    sub: Subcommand,
    started: DateTime<Utc>,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(parent)?;
    let stem = format!("{}-{}", sub.name(), started.format("%Y%m%dT%H%M%S%.3fZ"));
    for n in 0.. {
        let dir = if n == 0 {
            parent.join(&stem)
        } else {
            parent.join(format!("{stem}-{n}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

fn inventory(dir: &Path) -> Vec<String> {
    let mut files: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n != "manifest.json")
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = cli.command.split();
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let started = Utc::now();
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!(
            "output.dir={}",
            serde_json::Value::String(out.display().to_string())
        ));
    }
    let loaded = config::load(sub, args.config.as_deref(), &overrides);

    if args.print_config {
        return match loaded {
            Ok(cfg) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&cfg).expect("config serializes")
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        };
    }

    let parent = match &loaded {
        Ok(cfg) => cfg.output.dir.clone(),
        Err(_) => args.out.clone().unwrap_or_else(|| PathBuf::from("runs")),
    };
    let dir = match fresh_run_dir(&parent, sub, started) {
        Ok(d) => d,
        Err(e) => {
            eprintln!(
                "error: cannot create a run directory under {}: {e}",
                parent.display()
            );
            return ExitCode::from(1);
        }
    };
    log::info!("run directory {}", dir.display());

    let result = match &loaded {
        Ok(cfg) => run::execute(sub, cfg, &dir, args.quiet),
        Err(e) => Err(CliError::Config(match e {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        })),
    };
    let (exit_code, status, error) = match &result {
        Ok(()) => (0, "success", None),
        Err(e) => (
            e.exit_code(),
            match e {
                CliError::Config(_) => "config-error",
                CliError::Numerical(_) => "numerical-failure",
                CliError::Assertion(_) => "assertion-failure",
            },
            Some(e.to_string()),
        ),
    };
    let manifest = Manifest {
        command: sub.name(),
        version: env!("CARGO_PKG_VERSION"),
        started: started.to_rfc3339(),
        finished: Utc::now().to_rfc3339(),
        exit_code,
        status,
        error: error.clone(),
        config: loaded.as_ref().ok(),
        files: inventory(&dir),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = std::fs::write(dir.join("manifest.json"), text) {
        eprintln!("error: cannot write the manifest: {e}");
    }
    if let Some(msg) = error {
        eprintln!("error: {msg}");
    }
    if !args.quiet {
        println!("{}", dir.display());
    }
    ExitCode::from(exit_code)
}
