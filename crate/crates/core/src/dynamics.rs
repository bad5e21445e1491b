//! Force assembly, velocity-Verlet time stepping and amplitude rescaling.
//!
//! For an amplitude parameter `ε` (1 for the unscaled equation) the
//! acceleration of a curve `G` with reference density `m` is
//!
//! ```text
//! ∂_tt G = (ℓ/m) · B · ν,
//! B = v(s) (−ε⁻³ H + ε⁻¹ φ(s) ⟨G, ν⟩) + ε⁻⁴ ρ / Vol(G),   s = ε²|G|²/2,
//! ```
//!
//! the Euler–Lagrange equation of `½∫m|∂_tG|² − ε⁻³∫v dμ_t + ε⁻⁴ρ log Vol`.
//! It is exactly `ε⁻² A₁(εG)` for the unscaled acceleration `A₁`, so
//! `F(t) = εG(√ε t)` solves the unscaled equation.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ode_solvers::{Dop853, OutputType, System, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{sample_curve, GeometryBundle, GridImmersion, Reference};
use crate::potential::{PotentialSpec, PotentialValues};
use crate::spectral::{Grid, SpacetimeFrame};

/// Default CFL safety factor.
pub const DEFAULT_CFL_SAFETY: f64 = 0.25;
/// Default bound on the relative gap between the two volume computations.
pub const DEFAULT_VOLUME_TOL: f64 = 1e-6;

/// Physical parameters of the force.
#[derive(Clone, Debug)]
pub struct ForceParams {
    pub rho: f64,
    pub vol0: f64,
    pub potential: PotentialSpec,
    /// Amplitude parameter of the rescaled equation; 1 for the unscaled one.
    pub epsilon: f64,
}

impl ForceParams {
    pub fn new(rho: f64, vol0: f64, potential: PotentialSpec) -> Result<Self> {
        Self::rescaled(rho, vol0, potential, 1.0)
    }

    pub fn rescaled(rho: f64, vol0: f64, potential: PotentialSpec, epsilon: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::config(format!("sim.rho must be > 0 (got {rho})")));
        }
        if !(vol0 > 0.0) || !vol0.is_finite() {
            return Err(Error::config(format!("sim.vol0 must be > 0 (got {vol0})")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::config(format!(
                "sim.epsilon must lie in (0, 1] (got {epsilon})"
            )));
        }
        Ok(Self {
            rho,
            vol0,
            potential,
            epsilon,
        })
    }

    /// `(ε⁻¹, ε⁻³, ε⁻⁴)`
    pub fn powers(&self) -> (f64, f64, f64) {
        let e1 = 1.0 / self.epsilon;
        (e1, e1 * e1 * e1, e1 * e1 * e1 * e1)
    }

    /// Potential argument `s = ε²|G|²/2` at a point.
    pub fn s_at(&self, p: [f64; 2]) -> f64 {
        0.5 * self.epsilon * self.epsilon * (p[0] * p[0] + p[1] * p[1])
    }

    /// Same physics viewed at amplitude `c`: `ε ↦ ε/c`.
    fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }
}

/// Every pointwise ingredient of the force at one curve.
#[derive(Clone, Debug)]
pub struct ForceTerms {
    pub geometry: GeometryBundle,
    pub potential: Vec<PotentialValues>,
    /// `⟨G, ν⟩`
    pub support: Vec<f64>,
    /// `⟨G, T⟩`
    pub tangential_support: Vec<f64>,
    /// the scalar bracket `B`
    pub bracket: Vec<f64>,
    pub accel: VectorField,
}

pub fn force_terms(f: &GridImmersion, params: &ForceParams) -> Result<ForceTerms> {
    let geometry = f.geometry()?;
    if !(geometry.volume > 0.0) {
        return Err(Error::numerical(format!(
            "enclosed volume {} is not positive",
            geometry.volume
        )));
    }
    let (e1, e3, e4) = params.powers();
    let pos = f.positions();
    let pressure = e4 * params.rho / geometry.volume;
    let m = pos.len();
    let mut potential = Vec::with_capacity(m);
    let support = pos.dot(&geometry.normal);
    let tangential_support = pos.dot(&geometry.unit_tangent);
    let mut bracket = Vec::with_capacity(m);
    for j in 0..m {
        let pv = params.potential.eval(params.s_at(pos.at(j)))?;
        bracket
            .push(pv.v * (-e3 * geometry.mean_curvature[j] + e1 * pv.phi * support[j]) + pressure);
        potential.push(pv);
    }
    let scale: Vec<f64> = bracket
        .iter()
        .zip(&geometry.measure_ratio)
        .map(|(b, r)| b * r)
        .collect();
    let accel = VectorField::scaled_by(&scale, &geometry.normal);
    if !accel.is_finite() {
        return Err(Error::numerical("acceleration is not finite"));
    }
    Ok(ForceTerms {
        geometry,
        potential,
        support,
        tangential_support,
        bracket,
        accel,
    })
}

pub fn acceleration(f: &GridImmersion, params: &ForceParams) -> Result<VectorField> {
    Ok(force_terms(f, params)?.accel)
}

/// Discrete potential energy `ε⁻³ Σ v(s_j) ℓ_j Δθ − ε⁻⁴ ρ log(ε²Vol/Vol₀)`; the
/// acceleration equals `−(1/(m_j Δθ)) ∂/∂G_j` of it.
pub fn discrete_potential_energy(f: &GridImmersion, params: &ForceParams) -> Result<f64> {
    let geometry = f.geometry()?;
    let (_, e3, e4) = params.powers();
    let pos = f.positions();
    let mut inner = 0.0;
    for j in 0..pos.len() {
        inner += params.potential.v(params.s_at(pos.at(j)))? * geometry.speed[j];
    }
    inner *= f.grid().dtheta();
    Ok(e3 * inner - e4 * params.rho * pressure_log(geometry.volume, params)?)
}

/// `log(ε² Vol / Vol₀)`
pub(crate) fn pressure_log(volume: f64, params: &ForceParams) -> Result<f64> {
    if !(volume > 0.0) {
        return Err(Error::numerical(format!(
            "enclosed volume {volume} is not positive"
        )));
    }
    Ok((params.epsilon * params.epsilon * volume / params.vol0).ln())
}

/// Largest principal coefficient `a = (ℓ/m) v ε⁻³ / g`, or an error when a
/// node has `v ≤ 0` or a degenerate frame.
fn max_wave_speed_sq(f: &GridImmersion, params: &ForceParams) -> Result<f64> {
    let geometry = f.geometry()?;
    let (_, e3, _) = params.powers();
    let mut a_max: f64 = 0.0;
    for j in 0..f.len() {
        let v = params.potential.v(params.s_at(f.positions().at(j)))?;
        let a = geometry.measure_ratio[j] * v * e3 / geometry.metric[j];
        a_max = a_max.max(a);
    }
    Ok(a_max)
}

/// `dt = safety · (2π/M) · min_j √(g / (ratio · v · ε⁻³))`
pub fn cfl_time_step(f: &GridImmersion, params: &ForceParams, safety: f64) -> Result<f64> {
    let a_max = max_wave_speed_sq(f, params)?;
    Ok(safety * f.grid().dtheta() / a_max.sqrt())
}

/// Verlet stability limit `4/(M √a_max)` for the highest resolved mode.
pub fn stability_limit(f: &GridImmersion, params: &ForceParams) -> Result<f64> {
    let a_max = max_wave_speed_sq(f, params)?;
    Ok(4.0 / (f.len() as f64 * a_max.sqrt()))
}

/// Time, curve, velocity and cached acceleration.
#[derive(Clone, Debug)]
pub struct PhaseState {
    pub t: f64,
    pub curve: GridImmersion,
    pub velocity: VectorField,
    pub accel: VectorField,
}

impl PhaseState {
    pub fn new(
        t: f64,
        curve: GridImmersion,
        velocity: VectorField,
        params: &ForceParams,
    ) -> Result<Self> {
        assert_eq!(curve.len(), velocity.len(), "velocity length mismatch");
        let accel = acceleration(&curve, params)?;
        Ok(Self {
            t,
            curve,
            velocity,
            accel,
        })
    }

    pub fn positions(&self) -> &VectorField {
        self.curve.positions()
    }
}

/// One velocity-Verlet (kick–drift–kick) step.
pub fn step(state: &PhaseState, dt: f64, params: &ForceParams) -> Result<PhaseState> {
    let half_kick = state.velocity.axpy(0.5 * dt, &state.accel);
    let moved = state.positions().axpy(dt, &half_kick);
    if !moved.is_finite() {
        return Err(Error::numerical(format!(
            "positions became non-finite at t = {}",
            state.t + dt
        )));
    }
    let curve = state.curve.moved_to(moved);
    let accel = acceleration(&curve, params)?;
    let velocity = half_kick.axpy(0.5 * dt, &accel);
    Ok(PhaseState {
        t: state.t + dt,
        curve,
        velocity,
        accel,
    })
}

/// Volume change along the straight drift from `start` to `end`, i.e.
/// `∫ ⟨∂_tG, ν⟩ dμ_t dt` over the drift. The integrand is linear in time, so the
/// midpoint rule is exact.
fn drift_volume_change(grid: &Grid, start: &VectorField, end: &VectorField) -> f64 {
    let mid = start.add(end).scale(0.5);
    let tangent = grid.derivative_vec(&mid, 1);
    let w = end.sub(start);
    let flux: f64 = (0..w.len())
        .map(|j| w.x[j] * tangent.y[j] - w.y[j] * tangent.x[j])
        .sum();
    grid.dtheta() * flux
}

/// Initial normal perturbation `(a cos kθ + b sin kθ) ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct NormalMode {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

impl NormalMode {
    fn at(&self, theta: f64) -> f64 {
        let kt = self.k as f64 * theta;
        self.cos * kt.cos() + self.sin * kt.sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
}

/// Parametric initial data: a base shape with normal perturbations and a
/// velocity built from normal modes, a radial component, a translation and a
/// rigid rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveData {
    pub shape: Shape,
    pub center: [f64; 2],
    pub position_modes: Vec<NormalMode>,
    pub radial_velocity: f64,
    pub velocity_modes: Vec<NormalMode>,
    pub translation_velocity: [f64; 2],
    pub angular_velocity: f64,
}

impl CurveData {
    pub fn circle(radius: f64) -> Self {
        Self {
            shape: Shape::Circle { radius },
            center: [0.0, 0.0],
            position_modes: Vec::new(),
            radial_velocity: 0.0,
            velocity_modes: Vec::new(),
            translation_velocity: [0.0, 0.0],
            angular_velocity: 0.0,
        }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self {
            shape: Shape::Ellipse { a, b },
            ..Self::circle(1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            Shape::Circle { radius } if !(radius > 0.0) => Err(Error::config(format!(
                "initial.radius must be > 0 (got {radius})"
            ))),
            Shape::Ellipse { a, b } if !(a > 0.0 && b > 0.0) => Err(Error::config(format!(
                "initial ellipse axes must be > 0 (got {a}, {b})"
            ))),
            _ => Ok(()),
        }
    }

    /// Positions and velocities on an `m`-point grid.
    pub fn sample(&self, m: usize) -> Result<(VectorField, VectorField)> {
        self.validate()?;
        let grid = Grid::new(m)?;
        let [cx, cy] = self.center;
        let base = match self.shape {
            Shape::Circle { radius } => sample_curve(m, |t| [radius * t.cos(), radius * t.sin()]),
            Shape::Ellipse { a, b } => sample_curve(m, |t| [a * t.cos(), b * t.sin()]),
        };
        let normal = GridImmersion::new_reference(base.clone())?
            .geometry()?
            .normal;
        let theta = grid.nodes();
        let offset: Vec<f64> = theta
            .iter()
            .map(|t| self.position_modes.iter().map(|md| md.at(*t)).sum())
            .collect();
        let positions = VectorField::from_fn(m, |j| {
            [
                cx + base.x[j] + offset[j] * normal.x[j],
                cy + base.y[j] + offset[j] * normal.y[j],
            ]
        });
        let speed: Vec<f64> = theta
            .iter()
            .map(|t| {
                self.radial_velocity + self.velocity_modes.iter().map(|md| md.at(*t)).sum::<f64>()
            })
            .collect();
        let [tx, ty] = self.translation_velocity;
        let w = self.angular_velocity;
        let velocities = VectorField::from_fn(m, |j| {
            let (rx, ry) = (positions.x[j] - cx, positions.y[j] - cy);
            [
                speed[j] * normal.x[j] + tx - w * ry,
                speed[j] * normal.y[j] + ty + w * rx,
            ]
        });
        Ok((positions, velocities))
    }
}

#[derive(Clone, Debug)]
pub enum InitialData {
    Curve(CurveData),
    Explicit {
        positions: VectorField,
        velocities: VectorField,
    },
}

impl InitialData {
    pub fn sample(&self, m: usize) -> Result<(VectorField, VectorField)> {
        match self {
            InitialData::Curve(c) => c.sample(m),
            InitialData::Explicit {
                positions,
                velocities,
            } => {
                if positions.len() != m || velocities.len() != m {
                    return Err(Error::config(format!(
                        "explicit initial data has {} nodes, grid has {m}",
                        positions.len()
                    )));
                }
                Ok((positions.clone(), velocities.clone()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// CFL step from the initial state with this safety factor.
    Cfl {
        safety: f64,
    },
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub params: ForceParams,
    pub m: usize,
    pub horizon: f64,
    pub time_step: TimeStep,
    /// Store every `sample_every`-th step (the final state is always stored).
    pub sample_every: usize,
    pub initial: InitialData,
    /// Largest tolerated relative gap between the divergence-formula volume
    /// and the time-accumulated volume.
    pub volume_tol: f64,
}

impl SimConfig {
    pub fn new(params: ForceParams, m: usize, horizon: f64, initial: InitialData) -> Self {
        Self {
            params,
            m,
            horizon,
            time_step: TimeStep::Cfl {
                safety: DEFAULT_CFL_SAFETY,
            },
            sample_every: 1,
            initial,
            volume_tol: DEFAULT_VOLUME_TOL,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.time_step = TimeStep::Fixed(dt);
        self
    }

    pub fn with_sample_every(mut self, every: usize) -> Self {
        self.sample_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        crate::spectral::check_grid_size(self.m)?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "sim.horizon must be > 0 (got {})",
                self.horizon
            )));
        }
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0) => {
                return Err(Error::config(format!("sim.dt must be > 0 (got {dt})")))
            }
            TimeStep::Cfl { safety } if !(safety > 0.0 && safety <= 1.0) => {
                return Err(Error::config(format!(
                    "sim.cfl_safety must lie in (0, 1] (got {safety})"
                )))
            }
            _ => {}
        }
        if self.sample_every == 0 {
            return Err(Error::config("sim.sample_every must be >= 1"));
        }
        if !(self.volume_tol > 0.0) {
            return Err(Error::config("sim.volume_tol must be > 0"));
        }
        Ok(())
    }

    /// Initial state with the initial curve as its own reference.
    pub fn initial_state(&self) -> Result<PhaseState> {
        let (positions, velocities) = self.initial.sample(self.m)?;
        let curve = GridImmersion::new_reference(positions)?;
        let volume = curve.geometry()?.volume;
        if !(volume > 0.0) {
            return Err(Error::config(
                "initial curve must be positively oriented (counterclockwise) with positive area",
            ));
        }
        PhaseState::new(0.0, curve, velocities, &self.params)
    }

    /// Step size and step count: the requested (or CFL) step shrunk so that an
    /// integer number of steps lands on the horizon.
    pub fn resolve_steps(&self, initial: &PhaseState) -> Result<(f64, usize)> {
        let limit = stability_limit(&initial.curve, &self.params)?;
        let dt = match self.time_step {
            TimeStep::Fixed(dt) => {
                if dt >= limit {
                    return Err(Error::config(format!(
                        "sim.dt = {dt:e} exceeds the stability limit {limit:e} of the initial state"
                    )));
                }
                dt
            }
            TimeStep::Cfl { safety } => cfl_time_step(&initial.curve, &self.params, safety)?,
        };
        let n = (self.horizon / dt - 1e-9).ceil().max(1.0) as usize;
        Ok((self.horizon / n as f64, n))
    }
}

/// One stored time sample.
#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub positions: VectorField,
    pub velocity: VectorField,
    pub accel: VectorField,
    /// divergence-formula volume
    pub volume: f64,
    /// time-accumulated volume
    pub accumulated_volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Abort {
    pub t: f64,
    pub degenerate: bool,
    pub message: String,
}

/// Time samples of one run, in increasing time order.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub reference: Arc<Reference>,
    pub params: ForceParams,
    pub dt: f64,
    pub steps: usize,
    pub samples: Vec<Sample>,
    pub abort: Option<Abort>,
    pub max_volume_gap: f64,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    pub fn grid(&self) -> &Grid {
        self.reference.grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn end_time(&self) -> f64 {
        self.last().t
    }

    pub fn state(&self, i: usize) -> PhaseState {
        let s = &self.samples[i];
        PhaseState {
            t: s.t,
            curve: GridImmersion::with_reference(s.positions.clone(), Arc::clone(&self.reference)),
            velocity: s.velocity.clone(),
            accel: s.accel.clone(),
        }
    }

    pub fn curve(&self, i: usize) -> GridImmersion {
        GridImmersion::with_reference(
            self.samples[i].positions.clone(),
            Arc::clone(&self.reference),
        )
    }

    /// Position frames for spacetime norms.
    pub fn frames(&self) -> impl Iterator<Item = SpacetimeFrame<'_>> {
        self.samples.iter().map(|s| SpacetimeFrame {
            t: s.t,
            value: &s.positions,
            rate: &s.velocity,
            accel: &s.accel,
        })
    }

    /// Largest node displacement from the initial positions.
    pub fn max_displacement(&self) -> f64 {
        let first = &self.samples[0].positions;
        self.samples
            .iter()
            .map(|s| s.positions.sub(first).max_abs())
            .fold(0.0, f64::max)
    }

    /// Node dump with columns `t, j, x, y, vx, vy`.
    pub fn write_nodes_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,j,x,y,vx,vy")?;
        for s in &self.samples {
            for j in 0..s.positions.len() {
                writeln!(
                    out,
                    "{:.17e},{j},{:.17e},{:.17e},{:.17e},{:.17e}",
                    s.t, s.positions.x[j], s.positions.y[j], s.velocity.x[j], s.velocity.y[j]
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn sample_of(state: &PhaseState, volume: f64, accumulated_volume: f64) -> Sample {
    Sample {
        t: state.t,
        positions: state.positions().clone(),
        velocity: state.velocity.clone(),
        accel: state.accel.clone(),
        volume,
        accumulated_volume,
    }
}

/// Runs `steps` Verlet steps of size `dt` from `initial`. Numerical failures
/// stop the run and are recorded in [`Trajectory::abort`].
pub fn integrate(
    initial: PhaseState,
    params: &ForceParams,
    dt: f64,
    steps: usize,
    sample_every: usize,
    volume_tol: f64,
) -> Result<Trajectory> {
    let grid = initial.curve.grid().clone();
    let volume0 = initial.curve.geometry()?.volume;
    let mut traj = Trajectory {
        reference: Arc::clone(initial.curve.reference()),
        params: params.clone(),
        dt,
        steps: 0,
        samples: vec![sample_of(&initial, volume0, volume0)],
        abort: None,
        max_volume_gap: 0.0,
    };
    let mut state = initial;
    let mut accumulated = volume0;
    for n in 1..=steps {
        let next = match step(&state, dt, params) {
            Ok(next) => next,
            Err(e) if e.is_numerical() => {
                log::warn!("run aborted at t = {:.6}: {e}", state.t);
                traj.abort = Some(Abort {
                    t: state.t,
                    degenerate: matches!(e, Error::Degenerate { .. }),
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        accumulated += drift_volume_change(&grid, state.positions(), next.positions());
        // geometry already validated inside `step`
        let volume = next.curve.geometry()?.volume;
        let gap = (accumulated - volume).abs() / volume.abs();
        traj.max_volume_gap = traj.max_volume_gap.max(gap);
        traj.steps = n;
        state = next;
        if gap > volume_tol {
            traj.samples.push(sample_of(&state, volume, accumulated));
            traj.abort = Some(Abort {
                t: state.t,
                degenerate: false,
                message: format!(
                    "volume check failed: divergence formula {volume} vs accumulated {accumulated} (relative gap {gap:e})"
                ),
            });
            break;
        }
        if n % sample_every == 0 || n == steps {
            traj.samples.push(sample_of(&state, volume, accumulated));
        }
    }
    Ok(traj)
}

pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let initial = cfg.initial_state()?;
    let (dt, steps) = cfg.resolve_steps(&initial)?;
    integrate(
        initial,
        &cfg.params,
        dt,
        steps,
        cfg.sample_every,
        cfg.volume_tol,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// rescaled solution `G` to the unscaled `F(t) = εG(√ε t)`
    Forward,
    /// unscaled `F` to `G(τ) = ε⁻¹F(τ/√ε)`
    Inverse,
}

/// Applies the amplitude/time map `F(t) = c G(√c t)` with `c = ε` (forward) or
/// `c = 1/ε` (inverse). The equation parameter transforms as `ε ↦ ε/c`.
pub fn rescale_solution(
    traj: &Trajectory,
    epsilon: f64,
    direction: Direction,
) -> Result<Trajectory> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::config(format!(
            "rescaling needs epsilon > 0 (got {epsilon})"
        )));
    }
    let c = match direction {
        Direction::Forward => epsilon,
        Direction::Inverse => 1.0 / epsilon,
    };
    let root = c.sqrt();
    let samples = traj
        .samples
        .iter()
        .map(|s| Sample {
            t: s.t / root,
            positions: s.positions.scale(c),
            velocity: s.velocity.scale(c * root),
            accel: s.accel.scale(c * c),
            volume: s.volume * c * c,
            accumulated_volume: s.accumulated_volume * c * c,
        })
        .collect();
    Ok(Trajectory {
        reference: Arc::new(traj.reference.scaled(c)),
        params: traj.params.with_epsilon(traj.params.epsilon / c),
        dt: traj.dt / root,
        steps: traj.steps,
        samples,
        abort: traj.abort.as_ref().map(|a| Abort {
            t: a.t / root,
            ..a.clone()
        }),
        max_volume_gap: traj.max_volume_gap,
    })
}

/// Radius equation of a centred circle, uniformly parametrized with reference radius `r_ref`:
/// `r̈ = (r/r_ref) [v(ε²r²/2)(−ε⁻³/r + ε⁻¹ φ r) + ε⁻⁴ ρ/(π r²)]`.
struct RadialSystem<'a> {
    params: &'a ForceParams,
    r_ref: f64,
}

impl RadialSystem<'_> {
    fn accel(&self, r: f64) -> Result<f64> {
        let (e1, e3, e4) = self.params.powers();
        let s = self.params.s_at([r, 0.0]);
        let pv = self.params.potential.eval(s)?;
        let bracket = pv.v * (-e3 / r + e1 * pv.phi * r)
            + e4 * self.params.rho / (std::f64::consts::PI * r * r);
        Ok(r / self.r_ref * bracket)
    }
}

impl System<f64, Vector2<f64>> for RadialSystem<'_> {
    fn system(&self, _t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        // a failed potential evaluation surfaces as a non-finite end state
        dy[1] = self.accel(y[0]).unwrap_or(f64::NAN);
    }
}

/// Integrates the radial equation with an 8th-order Dormand–Prince method and
/// returns `(r, ṙ)` at each requested time (sorted, nonnegative).
pub fn radial_oracle(
    params: &ForceParams,
    r_ref: f64,
    r0: f64,
    rdot0: f64,
    times: &[f64],
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut y = Vector2::new(r0, rdot0);
    for &t in times {
        if t < t_prev {
            return Err(Error::config("radial oracle times must be sorted"));
        }
        if t > t_prev {
            let system = RadialSystem { params, r_ref };
            // sparse output: one record per accepted step, the last exactly at `t`
            let mut solver = Dop853::from_param(
                system,
                t_prev,
                t,
                0.0,
                y,
                tol,
                tol * 1e-2,
                0.9,
                0.0,
                0.333,
                6.0,
                t - t_prev,
                0.0,
                1_000_000,
                1000,
                OutputType::Sparse,
            );
            solver
                .integrate()
                .map_err(|e| Error::numerical(format!("radial oracle: {e}")))?;
            let last = *solver.y_out().last().expect("solver output");
            let reached = *solver.x_out().last().expect("solver output");
            if (reached - t).abs() > 1e-12 * t.max(1.0) || !last[0].is_finite() {
                return Err(Error::numerical(format!(
                    "radial oracle stopped at t = {reached}"
                )));
            }
            y = last;
            t_prev = t;
        }
        out.push((y[0], y[1]));
    }
    Ok(out)
}
