//! Nash–Moser iteration for the rescaled equation at desk scale.
//!
//! Write `G = F̄ + F₀ + tF₁` with `F̄(0) = ∂_tF̄(0) = 0`. Every iterate is a
//! Verlet trajectory on one uniform time grid, determined by its discrete
//! acceleration sequence `α`; `∂_tt F̄` means `α`. The truncated map at level `l`
//! smooths the scalar normal force `(dμ_t/dμ)B` to modes `|k| < N_l` and
//! multiplies by `ν`, so the level-`l` residual is
//!
//! ```text
//! E^l_n = α^l_n − Π_{N_l}[(dμ_t/dμ)B](G^l_n) ν(G^l_n).
//! ```
//!
//! The correction `h^{l+1}` solves `∂_tt h = L(G^l) h − E^l` with zero data,
//! so `α^{l+1} = α^l + L h − E^l` and `F̄^{l+1} = F̄^l + h^{l+1}`. With
//! `R(h) = f(G+h) − f(G) − L h` and the truncation defect `D_l(G) = f_l(G) − f(G)`,
//!
//! ```text
//! E^{l+1} = −R(h^{l+1}) − D_{l+1}(G^{l+1}) + D_l(G^l)
//! ```
//!
//! exactly, which the trace reports per level.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    cfl_time_step, force_terms, integrate, CurveData, ForceParams, ForceTerms, NormalMode,
    PhaseState, Sample, Trajectory, DEFAULT_CFL_SAFETY, DEFAULT_VOLUME_TOL,
};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{GridImmersion, Reference};
use crate::linearized::{loglog_slope, solve_linearized, LinearizedAt, LinearizedOperator};
use crate::potential::PotentialSpec;
use crate::spectral::{spacetime_norm_series, Grid, NormSpec};

/// `(N_l, s_l) = (2^l, s̄ + (s − s̄)/2^l)`.
pub fn schedule(level: u32, s_bar: f64, s: f64) -> Result<(u64, f64)> {
    if !(s_bar < s) {
        return Err(Error::config(format!(
            "schedule needs s̄ < s (got s̄ = {s_bar}, s = {s})"
        )));
    }
    if level >= 63 {
        return Err(Error::config(format!("level {level} is out of range")));
    }
    let n = 1u64 << level;
    Ok((n, s_bar + (s - s_bar) / n as f64))
}

/// Problem data and iteration controls.
#[derive(Clone, Debug)]
pub struct NashMoserConfig {
    /// parameters of the rescaled equation
    pub params: ForceParams,
    pub f0: VectorField,
    pub f1: VectorField,
    pub horizon: f64,
    /// time steps on `[0, T]`; `None` picks the CFL step at `F₀`
    pub steps: Option<usize>,
    pub s_bar: f64,
    pub s: f64,
    pub tol: f64,
    pub max_levels: u32,
    /// radius of the ball `|||F̄^l|||_{s̄,T} ≤ R` reported in the trace
    pub ball_radius: f64,
}

impl NashMoserConfig {
    pub fn new(params: ForceParams, f0: VectorField, f1: VectorField, horizon: f64) -> Self {
        Self {
            params,
            f0,
            f1,
            horizon,
            steps: None,
            s_bar: 2.0,
            s: 4.0,
            tol: 1e-8,
            max_levels: 8,
            ball_radius: 1.0,
        }
    }

    /// Breathing data around the equilibrium circle of the rescaled zero-eta
    /// problem: radius `1/ε`, `ρ = π`, unit outward speed, small mode-2 and
    /// mode-3 velocity perturbations and a slow drift.
    pub fn breathing_circle(epsilon: f64, m: usize, horizon: f64) -> Result<Self> {
        let params = ForceParams::rescaled(PI, PI, PotentialSpec::zero_eta(), epsilon)?;
        let mut data = CurveData::circle(1.0 / epsilon);
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
        let (f0, f1) = data.sample(m)?;
        Ok(Self::new(params, f0, f1, horizon))
    }

    pub fn validate(&self) -> Result<()> {
        schedule(0, self.s_bar, self.s)?;
        if self.s_bar < 2.0 {
            return Err(Error::config(format!(
                "s̄ = {} must be at least 2",
                self.s_bar
            )));
        }
        if self.f0.len() != self.f1.len() {
            return Err(Error::config(
                "F₀ and F₁ must have the same number of nodes",
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon T = {} must be positive",
                self.horizon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        if self.steps == Some(0) {
            return Err(Error::config("steps must be positive"));
        }
        if !self.f0.is_finite() || !self.f1.is_finite() {
            return Err(Error::config("initial data must be finite"));
        }
        Ok(())
    }
}

/// The shifted unknown along the time grid.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub fbar: Vec<VectorField>,
    pub rate: Vec<VectorField>,
    pub alpha: Vec<VectorField>,
}

impl Iterate {
    pub fn zero(samples: usize, m: usize) -> Self {
        let z = VectorField::zeros(m);
        Self {
            fbar: vec![z.clone(); samples],
            rate: vec![z.clone(); samples],
            alpha: vec![z; samples],
        }
    }

    /// The shift `F̄ = F − F₀ − tF₁` of a trajectory stored at every step.
    pub fn from_trajectory(traj: &Trajectory, f0: &VectorField, f1: &VectorField) -> Self {
        let mut it = Self::zero(0, f0.len());
        for s in &traj.samples {
            it.fbar.push(s.positions.sub(f0).axpy(-s.t, f1));
            it.rate.push(s.velocity.sub(f1));
            it.alpha.push(s.accel.clone());
        }
        it
    }
}

/// Uniform time grid and frozen reference shared by all levels.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: NashMoserConfig,
    pub reference: Arc<Reference>,
    pub times: Vec<f64>,
}

impl Problem {
    pub fn new(config: NashMoserConfig) -> Result<Self> {
        config.validate()?;
        let start = GridImmersion::new_reference(config.f0.clone())?;
        let steps = match config.steps {
            Some(n) => n,
            None => {
                let dt = cfl_time_step(&start, &config.params, DEFAULT_CFL_SAFETY)?;
                (config.horizon / dt).ceil() as usize
            }
        };
        let dt = config.horizon / steps as f64;
        Ok(Self {
            reference: Arc::clone(start.reference()),
            times: (0..=steps).map(|n| n as f64 * dt).collect(),
            config,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.reference.grid()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    fn positions(&self, fbar: &[VectorField]) -> Vec<GridImmersion> {
        self.times
            .iter()
            .zip(fbar)
            .map(|(&t, f)| {
                let p = f.add(&self.config.f0).axpy(t, &self.config.f1);
                GridImmersion::with_reference(p, Arc::clone(&self.reference))
            })
            .collect()
    }

    fn spec(&self, s: f64) -> Result<NormSpec> {
        NormSpec::new(s, self.config.horizon)
    }

    pub fn norm(&self, series: &[VectorField], s: f64) -> Result<f64> {
        spacetime_norm_series(self.grid(), &self.times, series, self.spec(s)?)
    }

    /// Direct Verlet run of the same data on the same time grid.
    pub fn direct_solution(&self) -> Result<Trajectory> {
        let cfg = &self.config;
        let curve = GridImmersion::with_reference(cfg.f0.clone(), Arc::clone(&self.reference));
        let init = PhaseState::new(0.0, curve, cfg.f1.clone(), &cfg.params)?;
        integrate(
            init,
            &cfg.params,
            self.dt(),
            self.times.len() - 1,
            1,
            DEFAULT_VOLUME_TOL,
        )
    }
}

/// `max_n ‖a_n − b_n‖_{H^s}` over samples at matched times.
pub fn matched_gap(grid: &Grid, a: &Trajectory, b: &Trajectory, s: f64) -> Result<f64> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::config("trajectories have different sample counts"));
    }
    let mut gap: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        if (x.t - y.t).abs() > 1e-9 * x.t.abs().max(1.0) {
            return Err(Error::config(format!(
                "sample times {} and {} do not match",
                x.t, y.t
            )));
        }
        gap = gap.max(grid.sobolev_norm_vec(&x.positions.sub(&y.positions), s));
    }
    Ok(gap)
}

/// The truncated force `Π_N[(dμ_t/dμ)B] ν`.
pub fn truncated_force(terms: &ForceTerms, grid: &Grid, cutoff: f64) -> Result<VectorField> {
    let scalar: Vec<f64> = terms
        .bracket
        .iter()
        .zip(&terms.geometry.measure_ratio)
        .map(|(b, r)| b * r)
        .collect();
    let smoothed = grid.smooth_truncate(&scalar, cutoff)?;
    Ok(VectorField::scaled_by(&smoothed, &terms.geometry.normal))
}

/// `E_n = α_n − Π_N f(G_n)` for an iterate.
pub fn residual(problem: &Problem, iterate: &Iterate, cutoff: f64) -> Result<Vec<VectorField>> {
    let curves = problem.positions(&iterate.fbar);
    curves
        .par_iter()
        .zip(&iterate.alpha)
        .map(|(c, a)| {
            let terms = force_terms(c, &problem.config.params)?;
            Ok(a.sub(&truncated_force(&terms, problem.grid(), cutoff)?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxLevels,
    /// `|||E¹||| ≥ |||E⁰|||`: the data or `ε` are outside the contraction regime
    EpsilonTooLarge,
    /// two consecutive increases
    Diverging,
}

impl Termination {
    pub fn describe(self) -> &'static str {
        match self {
            Termination::Converged => "residual below tolerance",
            Termination::MaxLevels => "level limit reached",
            Termination::EpsilonTooLarge => {
                "residual non-decreasing at the first level: ε too large"
            }
            Termination::Diverging => "residual increased twice in a row",
        }
    }
}

/// One row of the trace.
#[derive(Clone, Debug, Serialize)]
pub struct LevelRecord {
    pub level: u32,
    pub cutoff: u64,
    pub sobolev_order: f64,
    /// `|||E^l|||_{s_l,T}`
    pub residual: f64,
    /// `|||h^{l+1}|||_{s_l,T}` of the correction computed from `E^l`
    pub increment: Option<f64>,
    /// `|||F̄^l|||_{s̄,T}`
    pub iterate_norm: f64,
    pub within_ball: bool,
    /// sup-norm gap of the residual decomposition (levels ≥ 1)
    pub decomposition_gap: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub epsilon: f64,
    pub horizon: f64,
    pub steps: usize,
    pub s_bar: f64,
    pub s: f64,
    pub tol: f64,
    pub levels: Vec<LevelRecord>,
    pub termination: Termination,
}

impl IterationTrace {
    pub fn residuals(&self) -> Vec<f64> {
        self.levels.iter().map(|r| r.residual).collect()
    }

    /// Whether `|||E^l|||` strictly decreases over the first `count` levels.
    pub fn strictly_decreasing(&self, count: usize) -> bool {
        let r = self.residuals();
        r.len() >= count && r[..count].windows(2).all(|w| w[1] < w[0])
    }

    /// `log|||E^{l+1}||| / log|||E^l|||` for consecutive levels once below `below`.
    pub fn superlinear_ratios(&self, below: f64) -> Vec<f64> {
        self.residuals()
            .windows(2)
            .filter(|w| w[0] < below && w[1] > 0.0)
            .map(|w| w[1].ln() / w[0].ln())
            .collect()
    }

    pub fn max_decomposition_gap(&self) -> f64 {
        self.levels
            .iter()
            .filter_map(|r| r.decomposition_gap)
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "level",
            "cutoff",
            "sobolev_order",
            "residual",
            "increment",
            "iterate_norm",
            "within_ball",
            "decomposition_gap",
            "wall_seconds",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.levels {
            w.write_record([
                r.level.to_string(),
                r.cutoff.to_string(),
                r.sobolev_order.to_string(),
                format!("{:e}", r.residual),
                opt(r.increment),
                format!("{:e}", r.iterate_norm),
                r.within_ball.to_string(),
                opt(r.decomposition_gap),
                format!("{:.6}", r.wall_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// Everything evaluated at one iterate.
struct LevelState {
    op: LinearizedOperator,
    residual: Vec<VectorField>,
    /// `D_l(G^l) = f_l(G^l) − f(G^l)`
    defect: Vec<VectorField>,
}

fn evaluate(problem: &Problem, iterate: &Iterate, cutoff: f64) -> Result<LevelState> {
    let curves = problem.positions(&iterate.fbar);
    let op =
        LinearizedOperator::from_curves(problem.times.clone(), &curves, &problem.config.params)?;
    let (residual, defect) = op
        .at
        .par_iter()
        .zip(&iterate.alpha)
        .map(|(at, a)| {
            let truncated = truncated_force(at.terms(), problem.grid(), cutoff)?;
            Ok((a.sub(&truncated), truncated.sub(at.force())))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(LevelState {
        op,
        residual,
        defect,
    })
}

/// Runs the iteration from `F̄⁰ = 0`. Returns `F = F̄^L + F₀ + tF₁` at the last
/// completed level as a trajectory stored at every step, with the trace.
pub fn iterate(config: &NashMoserConfig) -> Result<(Trajectory, IterationTrace)> {
    let problem = Problem::new(config.clone())?;
    let (solution, trace, _) = run(&problem)?;
    Ok((solution, trace))
}

/// [`iterate`] on a prepared problem, also returning the final iterate.
pub fn run(problem: &Problem) -> Result<(Trajectory, IterationTrace, Iterate)> {
    let cfg = &problem.config;
    let m = cfg.f0.len();
    let mut current = Iterate::zero(problem.times.len(), m);
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut previous: Option<(LevelState, Vec<VectorField>)> = None;
    let mut increases = 0;
    let mut termination = Termination::MaxLevels;
    for level in 0..=cfg.max_levels {
        let clock = Instant::now();
        let (cutoff, order) = schedule(level, cfg.s_bar, cfg.s)?;
        let state = evaluate(problem, &current, cutoff as f64)?;
        let decomposition_gap = previous.as_ref().map(|(prev, h_accel)| {
            // E^{l+1} = −R(h) − D_{l+1}(G^{l+1}) + D_l(G^l), with
            // L h = accel(h) + E^l and R(h) = f(G^{l+1}) − f(G^l) − L h
            (0..problem.times.len())
                .map(|n| {
                    let lh = h_accel[n].add(&prev.residual[n]);
                    let remainder = state.op.at[n].force().sub(prev.op.at[n].force()).sub(&lh);
                    let predicted = remainder
                        .scale(-1.0)
                        .sub(&state.defect[n])
                        .add(&prev.defect[n]);
                    predicted.sub(&state.residual[n]).max_abs()
                })
                .fold(0.0, f64::max)
        });
        let residual = problem.norm(&state.residual, order)?;
        let iterate_norm = problem.norm(&current.fbar, cfg.s_bar)?;
        let mut record = LevelRecord {
            level,
            cutoff,
            sobolev_order: order,
            residual,
            increment: None,
            iterate_norm,
            within_ball: iterate_norm <= cfg.ball_radius,
            decomposition_gap,
            wall_seconds: 0.0,
        };
        log::info!("level {level}: N = {cutoff}, s = {order}, |||E||| = {residual:e}");
        if let Some(last) = levels.last() {
            if residual >= last.residual {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        let stop = if residual < cfg.tol {
            Some(Termination::Converged)
        } else if level == 1 && residual >= levels[0].residual {
            Some(Termination::EpsilonTooLarge)
        } else if increases >= 2 {
            Some(Termination::Diverging)
        } else if level == cfg.max_levels {
            Some(Termination::MaxLevels)
        } else {
            None
        };
        if let Some(reason) = stop {
            record.wall_seconds = clock.elapsed().as_secs_f64();
            levels.push(record);
            termination = reason;
            break;
        }
        let forcing: Vec<VectorField> = state.residual.iter().map(|e| e.scale(-1.0)).collect();
        let zero = VectorField::zeros(m);
        let h = match solve_linearized(&state.op, &forcing, &zero, &zero) {
            Err(Error::Config(msg)) if level > 0 => {
                return Err(Error::numerical(format!(
                    "iterate left the stable regime at level {level}: {msg}"
                )))
            }
            other => other?,
        };
        record.increment = Some(problem.norm(&h.h, order)?);
        for n in 0..problem.times.len() {
            current.fbar[n] = current.fbar[n].add(&h.h[n]);
            current.rate[n] = current.rate[n].add(&h.rate[n]);
            current.alpha[n] = current.alpha[n].add(&h.accel[n]);
        }
        record.wall_seconds = clock.elapsed().as_secs_f64();
        levels.push(record);
        previous = Some((state, h.accel));
    }
    let trace = IterationTrace {
        epsilon: cfg.params.epsilon,
        horizon: cfg.horizon,
        steps: problem.times.len() - 1,
        s_bar: cfg.s_bar,
        s: cfg.s,
        tol: cfg.tol,
        levels,
        termination,
    };
    let solution = to_trajectory(problem, &current)?;
    Ok((solution, trace, current))
}

fn to_trajectory(problem: &Problem, it: &Iterate) -> Result<Trajectory> {
    let cfg = &problem.config;
    let curves = problem.positions(&it.fbar);
    let samples = curves
        .into_iter()
        .enumerate()
        .map(|(n, c)| {
            let volume = c.geometry()?.volume;
            Ok(Sample {
                t: problem.times[n],
                velocity: it.rate[n].add(&cfg.f1),
                accel: it.alpha[n].clone(),
                positions: c.into_positions(),
                volume,
                accumulated_volume: volume,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        reference: Arc::clone(&problem.reference),
        params: cfg.params.clone(),
        dt: problem.dt(),
        steps: problem.times.len() - 1,
        samples,
        abort: None,
        max_volume_gap: 0.0,
    })
}

/// Measured `|||R(σh)|||_{s,T}` over a scaling sweep.
#[derive(Clone, Debug, Serialize)]
pub struct RemainderReport {
    pub sigmas: Vec<f64>,
    pub norms: Vec<f64>,
    /// fitted exponent of `σ`
    pub slope: f64,
}

/// `R(h)_n = f(G_n + h_n) − f(G_n) − L_n h_n` along the base iterate.
pub fn remainder(problem: &Problem, base: &Iterate, h: &[VectorField]) -> Result<Vec<VectorField>> {
    let curves = problem.positions(&base.fbar);
    curves
        .par_iter()
        .zip(h)
        .map(|(c, hn)| {
            let at = LinearizedAt::new(c, &problem.config.params)?;
            let moved = crate::dynamics::acceleration(
                &c.moved_to(c.positions().add(hn)),
                &problem.config.params,
            )?;
            Ok(moved.sub(at.force()).sub(&at.apply(hn)))
        })
        .collect()
}

/// Scaling sweep `h → σh` of the remainder in `|||·|||_{s,T}`.
pub fn remainder_check(
    problem: &Problem,
    base: &Iterate,
    h: &[VectorField],
    sigmas: &[f64],
    s: f64,
) -> Result<RemainderReport> {
    let norms = sigmas
        .iter()
        .map(|&sigma| {
            let scaled: Vec<VectorField> = h.iter().map(|v| v.scale(sigma)).collect();
            problem.norm(&remainder(problem, base, &scaled)?, s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RemainderReport {
        sigmas: sigmas.to_vec(),
        slope: loglog_slope(sigmas, &norms),
        norms,
    })
}

/// Leading remainder coefficient at one curve against half the second
/// directional difference `(f(G+δh) − 2f(G) + f(G−δh))/(2δ²)`; returns the
/// sup-norm of both.
pub fn quadratic_coefficient(
    curve: &GridImmersion,
    params: &ForceParams,
    h: &VectorField,
    sigma: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let at = LinearizedAt::new(curve, params)?;
    let f = |p: VectorField| crate::dynamics::acceleration(&curve.moved_to(p), params);
    let base = curve.positions();
    let r = f(base.axpy(sigma, h))?
        .sub(at.force())
        .sub(&at.apply(h).scale(sigma))
        .scale(1.0 / (sigma * sigma));
    let second = f(base.axpy(delta, h))?
        .add(&f(base.axpy(-delta, h))?)
        .sub(&at.force().scale(2.0))
        .scale(0.5 / (delta * delta));
    Ok((r.max_abs(), second.max_abs()))
}
