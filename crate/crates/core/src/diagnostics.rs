//! Conserved quantities along a trajectory: energies, Killing momenta, the
//! interior momentum of reparametrizations, and the lower volume bound.
//!
//! With amplitude parameter `ε` the two energy candidates are
//! `E_ham = K + ε⁻³∫v dμ_t − ε⁻⁴ρ log(ε²Vol/Vol₀)` and
//! `E_flip = K − ε⁻³∫v dμ_t + ε⁻⁴ρ log(ε²Vol/Vol₀)`, `K = ½∫|∂_tG|² dμ`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{pressure_log, ForceParams, PhaseState, Trajectory};
use crate::error::Result;
use crate::field::VectorField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Killing {
    TranslationX,
    TranslationY,
    /// `X(p) = p^⊥ = (−p_y, p_x)`
    Rotation,
}

impl Killing {
    pub const ALL: [Killing; 3] = [
        Killing::TranslationX,
        Killing::TranslationY,
        Killing::Rotation,
    ];

    fn at(self, p: [f64; 2]) -> [f64; 2] {
        match self {
            Killing::TranslationX => [1.0, 0.0],
            Killing::TranslationY => [0.0, 1.0],
            Killing::Rotation => [-p[1], p[0]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Energies {
    pub kinetic: f64,
    /// `∫ v dμ_t`
    pub inner: f64,
    /// `ρ log(ε²Vol/Vol₀)`
    pub pressure: f64,
    pub flipped: f64,
    pub hamiltonian: f64,
}

/// `½ Σ m_j |V_j|² Δθ`
pub fn kinetic_energy(state: &PhaseState) -> f64 {
    let grid = state.curve.grid();
    let m = state.curve.reference().density();
    let v = &state.velocity;
    0.5 * grid.dtheta()
        * (0..v.len())
            .map(|j| m[j] * (v.x[j] * v.x[j] + v.y[j] * v.y[j]))
            .sum::<f64>()
}

pub fn total_energy(state: &PhaseState, params: &ForceParams) -> Result<Energies> {
    let geometry = state.curve.geometry()?;
    let (_, e3, e4) = params.powers();
    let kinetic = kinetic_energy(state);
    let pos = state.positions();
    let mut inner = 0.0;
    for j in 0..pos.len() {
        inner += params.potential.v(params.s_at(pos.at(j)))? * geometry.speed[j];
    }
    inner *= state.curve.grid().dtheta();
    let pressure = params.rho * pressure_log(geometry.volume, params)?;
    Ok(Energies {
        kinetic,
        inner,
        pressure,
        flipped: kinetic - e3 * inner + e4 * pressure,
        hamiltonian: kinetic + e3 * inner - e4 * pressure,
    })
}

/// `M_X = ∫ ⟨∂_tG, X(G)⟩ dμ`
pub fn momentum(state: &PhaseState, x: Killing) -> f64 {
    let grid = state.curve.grid();
    let m = state.curve.reference().density();
    let (pos, v) = (state.positions(), &state.velocity);
    grid.dtheta()
        * (0..v.len())
            .map(|j| {
                let [a, b] = x.at(pos.at(j));
                m[j] * (v.x[j] * a + v.y[j] * b)
            })
            .sum::<f64>()
}

/// `Q_Y = ∫ ⟨∂_tG, G_*Y⟩ dμ` for `Y = (c/m) ∂_θ`, i.e. `c ∫ ⟨∂_tG, ∂_θG⟩ dθ`.
pub fn interior_momentum(state: &PhaseState, c: f64) -> f64 {
    let grid = state.curve.grid();
    let tangent = grid.derivative_vec(state.positions(), 1);
    c * grid.dtheta() * state.velocity.dot(&tangent).iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EnergyConvention {
    Hamiltonian,
    Flipped,
}

/// Diagnostic time series of one trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub epsilon: f64,
    pub rho: f64,
    pub vol0: f64,
    pub t: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub inner: Vec<f64>,
    pub pressure: Vec<f64>,
    pub e_flipped: Vec<f64>,
    pub e_ham: Vec<f64>,
    pub momentum_x: Vec<f64>,
    pub momentum_y: Vec<f64>,
    pub angular_momentum: Vec<f64>,
    /// `Q_Y` with `c = 1`
    pub interior: Vec<f64>,
    pub volume: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
struct Row {
    energies: Energies,
    momenta: [f64; 3],
    interior: f64,
    volume: f64,
}

fn max_deviation(series: &[f64]) -> f64 {
    let first = series.first().copied().unwrap_or(0.0);
    series.iter().map(|v| (v - first).abs()).fold(0.0, f64::max)
}

fn relative_drift(series: &[f64]) -> f64 {
    let first = series.first().copied().unwrap_or(0.0);
    max_deviation(series) / first.abs()
}

impl ConservationReport {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let rows: Result<Vec<Row>> = (0..traj.samples.len())
            .into_par_iter()
            .map(|i| {
                let state = traj.state(i);
                Ok(Row {
                    energies: total_energy(&state, &traj.params)?,
                    momenta: Killing::ALL.map(|x| momentum(&state, x)),
                    interior: interior_momentum(&state, 1.0),
                    volume: traj.samples[i].volume,
                })
            })
            .collect();
        let rows = rows?;
        let col = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        Ok(Self {
            epsilon: traj.params.epsilon,
            rho: traj.params.rho,
            vol0: traj.params.vol0,
            t: traj.times(),
            kinetic: col(&|r| r.energies.kinetic),
            inner: col(&|r| r.energies.inner),
            pressure: col(&|r| r.energies.pressure),
            e_flipped: col(&|r| r.energies.flipped),
            e_ham: col(&|r| r.energies.hamiltonian),
            momentum_x: col(&|r| r.momenta[0]),
            momentum_y: col(&|r| r.momenta[1]),
            angular_momentum: col(&|r| r.momenta[2]),
            interior: col(&|r| r.interior),
            volume: col(&|r| r.volume),
        })
    }

    pub fn energy_drift(&self, convention: EnergyConvention) -> f64 {
        relative_drift(match convention {
            EnergyConvention::Hamiltonian => &self.e_ham,
            EnergyConvention::Flipped => &self.e_flipped,
        })
    }

    /// The energy convention with the smaller relative drift.
    pub fn conserved_energy(&self) -> EnergyConvention {
        if self.energy_drift(EnergyConvention::Hamiltonian)
            <= self.energy_drift(EnergyConvention::Flipped)
        {
            EnergyConvention::Hamiltonian
        } else {
            EnergyConvention::Flipped
        }
    }

    pub fn initial_energy(&self) -> f64 {
        match self.conserved_energy() {
            EnergyConvention::Hamiltonian => self.e_ham[0],
            EnergyConvention::Flipped => self.e_flipped[0],
        }
    }

    pub fn summary(&self) -> ConservationSummary {
        let convention = self.conserved_energy();
        let bounds = volume_bounds(self);
        ConservationSummary {
            samples: self.t.len(),
            conserved_energy: convention,
            e_ham_relative_drift: self.energy_drift(EnergyConvention::Hamiltonian),
            e_flipped_relative_drift: self.energy_drift(EnergyConvention::Flipped),
            momentum_x_drift: max_deviation(&self.momentum_x),
            momentum_y_drift: max_deviation(&self.momentum_y),
            angular_momentum_drift: max_deviation(&self.angular_momentum),
            interior_momentum_drift: max_deviation(&self.interior),
            volume_bounds: bounds,
        }
    }

    /// One row per sample: `t`, then the named columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "t,kinetic,inner,pressure,e_flipped,e_ham,momentum_x,momentum_y,angular_momentum,interior_momentum,volume,volume_lower_bound"
        )?;
        let lower = volume_bounds(self).lower_bound;
        for i in 0..self.t.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.t[i],
                self.kinetic[i],
                self.inner[i],
                self.pressure[i],
                self.e_flipped[i],
                self.e_ham[i],
                self.momentum_x[i],
                self.momentum_y[i],
                self.angular_momentum[i],
                self.interior[i],
                self.volume[i],
                lower
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationSummary {
    pub samples: usize,
    pub conserved_energy: EnergyConvention,
    pub e_ham_relative_drift: f64,
    pub e_flipped_relative_drift: f64,
    pub momentum_x_drift: f64,
    pub momentum_y_drift: f64,
    pub angular_momentum_drift: f64,
    pub interior_momentum_drift: f64,
    pub volume_bounds: VolumeBounds,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeBounds {
    pub pass: bool,
    /// `E₀` of the conserved convention
    pub initial_energy: f64,
    /// lower bound in the units of the stored volumes
    pub lower_bound: f64,
    pub min_volume: f64,
    pub min_margin: f64,
    pub violations: usize,
    /// empirical upper envelope `max Vol(t)`
    pub max_volume: f64,
    /// `min_t ∫v dμ_t / Vol^{1/2}`, the empirical constant of the isoperimetric-type hypothesis
    pub inner_to_volume_constant: f64,
}

/// Checks `ε²Vol(t) ≥ Vol₀ e^{−ε⁴E₀/ρ}` at every sample (for `ε = 1`,
/// `Vol ≥ Vol₀ e^{−E₀/ρ}`).
pub fn volume_bounds(report: &ConservationReport) -> VolumeBounds {
    let e0 = report.initial_energy();
    let eps2 = report.epsilon * report.epsilon;
    let lower = report.vol0 / eps2 * (-(eps2 * eps2) * e0 / report.rho).exp();
    let min_volume = report.volume.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = report.volume.iter().filter(|v| **v < lower).count();
    let constant = report
        .inner
        .iter()
        .zip(&report.volume)
        .map(|(i, v)| i / v.sqrt())
        .fold(f64::INFINITY, f64::min);
    VolumeBounds {
        pass: violations == 0,
        initial_energy: e0,
        lower_bound: lower,
        min_volume,
        min_margin: min_volume - lower,
        violations,
        max_volume: report
            .volume
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        inner_to_volume_constant: constant,
    }
}

/// `V` tangent to the curve with `⟨V, ∂_θG⟩` equal to `profile` (helper for
/// reparametrization-momentum tests).
pub fn tangential_velocity(
    state_positions: &VectorField,
    grid: &crate::spectral::Grid,
    profile: f64,
) -> VectorField {
    let tangent = grid.derivative_vec(state_positions, 1);
    let g: Vec<f64> = tangent.dot(&tangent);
    let c: Vec<f64> = g.iter().map(|g| profile / g).collect();
    VectorField::scaled_by(&c, &tangent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, CurveData, InitialData, SimConfig};
    use crate::geometry::GridImmersion;
    use crate::potential::PotentialSpec;
    use std::f64::consts::PI;

    fn params() -> ForceParams {
        ForceParams::new(PI, PI, PotentialSpec::zero_eta()).unwrap()
    }

    fn state_with(velocity: impl Fn(&VectorField) -> VectorField) -> PhaseState {
        let (pos, _) = CurveData::circle(1.0).sample(64).unwrap();
        let v = velocity(&pos);
        PhaseState::new(
            0.0,
            GridImmersion::new_reference(pos).unwrap(),
            v,
            &params(),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_energies() {
        let state = state_with(|p| VectorField::zeros(p.len()));
        let e = total_energy(&state, &params()).unwrap();
        assert_eq!(e.kinetic, 0.0);
        assert!((e.inner - 2.0 * PI).abs() < 1e-12);
        assert!(e.pressure.abs() < 1e-14);
        assert!((e.hamiltonian - 2.0 * PI).abs() < 1e-12);
        assert!((e.flipped + 2.0 * PI).abs() < 1e-12);
        for x in Killing::ALL {
            assert_eq!(momentum(&state, x), 0.0);
        }
        assert_eq!(interior_momentum(&state, 1.0), 0.0);
    }

    #[test]
    fn translation_momentum() {
        let state = state_with(|p| VectorField::from_fn(p.len(), |_| [0.7, 0.0]));
        assert!((momentum(&state, Killing::TranslationX) - 0.7 * 2.0 * PI).abs() < 1e-12);
        assert!(momentum(&state, Killing::TranslationY).abs() < 1e-14);
    }

    #[test]
    fn breathing_velocity_has_no_angular_momentum() {
        let state = state_with(|p| p.scale(0.3));
        assert!(momentum(&state, Killing::Rotation).abs() < 1e-14);
    }

    #[test]
    fn tangential_profile_gives_interior_momentum() {
        let grid = crate::spectral::Grid::new(64).unwrap();
        let state = state_with(|p| tangential_velocity(p, &grid, 0.4));
        assert!((interior_momentum(&state, 2.0) - 2.0 * 2.0 * PI * 0.4).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_run_respects_volume_bound() {
        let cfg = SimConfig::new(
            params(),
            32,
            0.2,
            InitialData::Curve(CurveData::circle(1.0)),
        );
        let report = ConservationReport::from_trajectory(&simulate(&cfg).unwrap()).unwrap();
        let b = volume_bounds(&report);
        assert!(b.pass);
        let expect = PI * (1.0 - (-2.0f64).exp());
        assert!((b.min_margin - expect).abs() < 1e-10);
    }
}
