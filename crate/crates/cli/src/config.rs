//! The run configuration: one JSON document with sections `potential`, `sim`,
//! `experiment` and `output`. Every field is explicit; the reference document of
//! each subcommand lists the defaults.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use centralflow::dynamics::{
    CurveData, ForceParams, InitialData, NormalMode, Shape, SimConfig, TimeStep,
};
use centralflow::harness::{ExperimentKind, ExperimentPlan, Tolerances};
use centralflow::nashmoser::NashMoserConfig;
use centralflow::potential::{EtaTable, PotentialKind, PotentialSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, Subcommand};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    ZeroEta,
    Gaussian,
    Power,
    Tabulated,
}

/// `kind` selects which of the remaining fields are read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSection {
    pub kind: PotentialName,
    /// gaussian: `η(w) = 2γw/n`
    pub gamma: f64,
    /// power: `η(w) = κ w^{p+1}`
    pub kappa: f64,
    pub p: f64,
    /// tabulated: CSV with columns `w,eta`
    pub table: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeName {
    Circle,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub shape: ShapeName,
    /// circle radius
    pub radius: f64,
    /// ellipse semi-axes
    pub a: f64,
    pub b: f64,
    pub center: [f64; 2],
    pub position_modes: Vec<NormalMode>,
    pub radial_velocity: f64,
    pub velocity_modes: Vec<NormalMode>,
    pub translation_velocity: [f64; 2],
    pub angular_velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub rho: f64,
    /// `null`: the volume of the initial curve
    pub vol0: Option<f64>,
    /// amplitude parameter of the rescaled equation; 1 is the unscaled equation
    pub epsilon: f64,
    pub m: usize,
    pub horizon: f64,
    /// `null`: CFL step with `cfl_safety`
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub sample_every: usize,
    pub volume_tol: f64,
    pub initial: InitialSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub control_epsilons: Vec<f64>,
    pub dts: Vec<f64>,
    pub ms: Vec<usize>,
    pub fields: usize,
    pub tolerances: Tolerances,
    /// linearize-check: central-difference step sizes
    pub deltas: Vec<f64>,
    /// nash-moser
    pub s_bar: f64,
    pub s: f64,
    pub tol: f64,
    pub max_levels: u32,
    pub ball_radius: f64,
    /// `null`: CFL step count at the initial curve
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    /// parent of the timestamped run directories
    pub dir: PathBuf,
    /// write the node dump `t,j,x,y,vx,vy`
    pub nodes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub potential: PotentialSection,
    pub sim: SimSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

fn potential_section(spec: &PotentialSpec) -> PotentialSection {
    let mut section = PotentialSection {
        kind: PotentialName::ZeroEta,
        gamma: 0.3,
        kappa: 0.2,
        p: 2.0,
        table: None,
    };
    match spec.kind {
        PotentialKind::ZeroEta => {}
        PotentialKind::Gaussian { gamma } => {
            section.kind = PotentialName::Gaussian;
            section.gamma = gamma;
        }
        PotentialKind::Power { kappa, p } => {
            section.kind = PotentialName::Power;
            section.kappa = kappa;
            section.p = p;
        }
        PotentialKind::Tabulated(_) => section.kind = PotentialName::Tabulated,
    }
    section
}

fn initial_section(data: &CurveData) -> InitialSection {
    let (shape, radius, a, b) = match data.shape {
        Shape::Circle { radius } => (ShapeName::Circle, radius, 1.0, 1.0),
        Shape::Ellipse { a, b } => (ShapeName::Ellipse, 1.0, a, b),
    };
    InitialSection {
        shape,
        radius,
        a,
        b,
        center: data.center,
        position_modes: data.position_modes.clone(),
        radial_velocity: data.radial_velocity,
        velocity_modes: data.velocity_modes.clone(),
        translation_velocity: data.translation_velocity,
        angular_velocity: data.angular_velocity,
    }
}

fn experiment_kind(sub: Subcommand) -> Option<ExperimentKind> {
    match sub {
        Subcommand::Stability => Some(ExperimentKind::Stability),
        Subcommand::Lifespan => Some(ExperimentKind::Lifespan),
        Subcommand::Convergence => Some(ExperimentKind::Convergence),
        Subcommand::CrossSolver => Some(ExperimentKind::CrossSolver),
        Subcommand::ConservationSuite => Some(ExperimentKind::ConservationSuite),
        Subcommand::SmoothingCheck => Some(ExperimentKind::Smoothing),
        _ => None,
    }
}

/// The fully explicit default configuration of a subcommand.
pub fn reference(sub: Subcommand) -> Config {
    let plan = ExperimentPlan::new(experiment_kind(sub).unwrap_or(ExperimentKind::Stability));
    let mut cfg = Config {
        potential: potential_section(&PotentialSpec::zero_eta()),
        sim: SimSection {
            rho: PI,
            vol0: Some(PI),
            epsilon: 1.0,
            m: 64,
            horizon: 1.0,
            dt: Some(1e-3),
            cfl_safety: centralflow::dynamics::DEFAULT_CFL_SAFETY,
            sample_every: 10,
            volume_tol: centralflow::dynamics::DEFAULT_VOLUME_TOL,
            initial: initial_section(&CurveData::circle(1.0)),
        },
        experiment: ExperimentSection {
            seed: plan.seed,
            epsilons: Vec::new(),
            control_epsilons: Vec::new(),
            dts: Vec::new(),
            ms: Vec::new(),
            fields: plan.fields,
            tolerances: Tolerances::default(),
            deltas: (0..=4).map(|i| 10f64.powf(-3.0 - 0.5 * i as f64)).collect(),
            s_bar: 2.0,
            s: 4.0,
            tol: 1e-8,
            max_levels: 8,
            ball_radius: 1.0,
            steps: None,
        },
        output: OutputSection {
            dir: PathBuf::from("runs"),
            nodes: true,
        },
    };
    match sub {
        Subcommand::LinearizeCheck => {
            cfg.potential = potential_section(&PotentialSpec::gaussian(0.3).expect("finite"));
            cfg.sim.rho = 2.0;
            cfg.sim.m = 32;
            let mut data = CurveData::ellipse(1.2, 0.9);
            data.position_modes = vec![NormalMode {
                k: 3,
                cos: 0.05,
                sin: 0.0,
            }];
            cfg.sim.initial = initial_section(&data);
        }
        Subcommand::NashMoser => {
            let eps = 0.05;
            cfg.sim.epsilon = eps;
            cfg.sim.horizon = 0.5;
            cfg.sim.dt = None;
            cfg.sim.sample_every = 1;
            cfg.experiment.tol = 1e-4;
            let mut data = CurveData::circle(1.0 / eps);
            data.radial_velocity = 1.0;
            data.velocity_modes = vec![
                NormalMode {
                    k: 2,
                    cos: 0.01,
                    sin: 0.0,
                },
                NormalMode {
                    k: 3,
                    cos: 0.0,
                    sin: 0.002,
                },
            ];
            data.translation_velocity = [0.1, 0.0];
            cfg.sim.initial = initial_section(&data);
        }
        _ => {}
    }
    if experiment_kind(sub).is_some() {
        cfg.potential = potential_section(&plan.potential);
        cfg.sim.rho = plan.rho;
        cfg.sim.m = plan.m;
        cfg.sim.dt = Some(plan.dt);
        cfg.sim.horizon = plan.horizon;
        cfg.experiment.epsilons = plan.epsilons;
        cfg.experiment.control_epsilons = plan.control_epsilons;
        cfg.experiment.dts = plan.dts;
        cfg.experiment.ms = plan.ms;
        cfg.experiment.tolerances = plan.tolerances;
    }
    cfg
}

/// Objects merge key by key; anything else replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=VALUE`; the value is read as JSON, or as a string if that fails.
fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE (got {assignment:?})")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for key in path.split('.') {
        if key.is_empty() {
            return Err(CliError::Config(format!(
                "--set has an empty key segment in {path:?}"
            )));
        }
        slot = match slot {
            Value::Object(map) => map
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Default::default())),
            _ => {
                return Err(CliError::Config(format!(
                    "--set {path}: {key:?} is not inside an object"
                )))
            }
        };
    }
    *slot = value;
    Ok(())
}

/// Reference defaults of `sub`, then the file, then the `--set` overrides.
/// Unknown keys are an error that lists all of them.
pub fn load(
    sub: Subcommand,
    file: Option<&Path>,
    overrides: &[String],
) -> Result<Config, CliError> {
    let mut doc = serde_json::to_value(reference(sub)).expect("reference config serializes");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let user: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("config {} is not valid JSON: {e}", path.display()))
        })?;
        if !user.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        merge(&mut doc, user);
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut unknown = Vec::new();
    let cfg: Config = serde_ignored::deserialize(doc, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if !unknown.is_empty() {
        return Err(CliError::Config(format!(
            "unknown config keys: {}",
            unknown.join(", ")
        )));
    }
    Ok(cfg)
}

impl PotentialSection {
    pub fn spec(&self) -> Result<PotentialSpec, CliError> {
        Ok(match self.kind {
            PotentialName::ZeroEta => PotentialSpec::zero_eta(),
            PotentialName::Gaussian => PotentialSpec::gaussian(self.gamma)?,
            PotentialName::Power => PotentialSpec::power(self.kappa, self.p)?,
            PotentialName::Tabulated => {
                let path = self.table.as_ref().ok_or_else(|| {
                    CliError::Config("potential.table is required for kind \"tabulated\"".into())
                })?;
                PotentialSpec::tabulated(EtaTable::from_csv(path)?)
            }
        })
    }
}

impl InitialSection {
    pub fn curve_data(&self) -> CurveData {
        let shape = match self.shape {
            ShapeName::Circle => Shape::Circle {
                radius: self.radius,
            },
            ShapeName::Ellipse => Shape::Ellipse {
                a: self.a,
                b: self.b,
            },
        };
        CurveData {
            shape,
            center: self.center,
            position_modes: self.position_modes.clone(),
            radial_velocity: self.radial_velocity,
            velocity_modes: self.velocity_modes.clone(),
            translation_velocity: self.translation_velocity,
            angular_velocity: self.angular_velocity,
        }
    }
}

impl Config {
    fn vol0(&self, positions: &centralflow::VectorField) -> Result<f64, CliError> {
        match self.sim.vol0 {
            Some(v) => Ok(v),
            None => Ok(
                centralflow::geometry::GridImmersion::new_reference(positions.clone())?
                    .geometry()?
                    .volume,
            ),
        }
    }

    pub fn force_params(&self) -> Result<ForceParams, CliError> {
        let (positions, _) = self.sim.initial.curve_data().sample(self.sim.m)?;
        let vol0 = self.vol0(&positions)?;
        Ok(ForceParams::rescaled(
            self.sim.rho,
            vol0,
            self.potential.spec()?,
            self.sim.epsilon,
        )?)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::new(
            self.force_params()?,
            self.sim.m,
            self.sim.horizon,
            InitialData::Curve(self.sim.initial.curve_data()),
        );
        cfg.time_step = match self.sim.dt {
            Some(dt) => TimeStep::Fixed(dt),
            None => TimeStep::Cfl {
                safety: self.sim.cfl_safety,
            },
        };
        cfg.sample_every = self.sim.sample_every;
        cfg.volume_tol = self.sim.volume_tol;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn nash_moser(&self) -> Result<NashMoserConfig, CliError> {
        let (f0, f1) = self.sim.initial.curve_data().sample(self.sim.m)?;
        let mut cfg = NashMoserConfig::new(self.force_params()?, f0, f1, self.sim.horizon);
        let e = &self.experiment;
        cfg.steps = e.steps;
        cfg.s_bar = e.s_bar;
        cfg.s = e.s;
        cfg.tol = e.tol;
        cfg.max_levels = e.max_levels;
        cfg.ball_radius = e.ball_radius;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn plan(&self, kind: ExperimentKind) -> Result<ExperimentPlan, CliError> {
        let e = &self.experiment;
        let plan = ExperimentPlan {
            kind,
            potential: self.potential.spec()?,
            rho: self.sim.rho,
            m: self.sim.m,
            dt: self.sim.dt.ok_or_else(|| {
                CliError::Config(format!("sim.dt must be set for {}", kind.name()))
            })?,
            horizon: self.sim.horizon,
            epsilons: e.epsilons.clone(),
            control_epsilons: e.control_epsilons.clone(),
            dts: e.dts.clone(),
            ms: e.ms.clone(),
            seed: e.seed,
            fields: e.fields,
            tolerances: e.tolerances.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn experiment_kind(sub: Subcommand) -> Option<ExperimentKind> {
        experiment_kind(sub)
    }
}
