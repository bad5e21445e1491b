//! Fréchet derivative of the force map and the linear evolution it drives.
//!
//! At a base curve `G` the force is `f = ratio · B · ν`. A perturbation `h`
//! changes it by
//!
//! ```text
//! δf = ratio · [(δℓ/ℓ) B ν + δB ν + B δν],
//! δℓ/ℓ = ⟨T, h_θ⟩/ℓ,   δν = −(⟨ν, h_θ⟩/ℓ) T,
//! δH = −⟨h_θθ, ν⟩/g − ⟨G_θθ, δν⟩/g − 2H δℓ/ℓ,
//! δv = −φ v ε²⟨G, h⟩,  δφ = φ' ε²⟨G, h⟩,  δ⟨G,ν⟩ = ⟨h, ν⟩ + ⟨G, δν⟩,
//! δVol = ∫ ⟨h, ν⟩ dμ_t,
//! ```
//!
//! which is the exact derivative of the discrete map (the spectral derivative
//! is linear and the quadratures are exact for it). In the frame variables
//! `h = u ν + r τ` the same operator reads as a wave equation in `u` coupled
//! to an ODE in `r`; see [`WeaklyHyperbolicCoefficients`].

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{force_terms, ForceParams, ForceTerms, Trajectory};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::GridImmersion;
use crate::spectral::{spacetime_norm, spacetime_norm_series, Grid, NormSpec, SpacetimeFrame};

/// The linearized force at one base curve.
#[derive(Clone, Debug)]
pub struct LinearizedAt {
    curve: GridImmersion,
    params: ForceParams,
    terms: ForceTerms,
    /// `Φ = −ε⁻³H + ε⁻¹φ⟨G,ν⟩`
    phi_bracket: Vec<f64>,
}

impl LinearizedAt {
    pub fn new(curve: &GridImmersion, params: &ForceParams) -> Result<Self> {
        let terms = force_terms(curve, params)?;
        let (e1, e3, _) = params.powers();
        let phi_bracket = (0..curve.len())
            .map(|j| {
                -e3 * terms.geometry.mean_curvature[j]
                    + e1 * terms.potential[j].phi * terms.support[j]
            })
            .collect();
        Ok(Self {
            curve: curve.clone(),
            params: params.clone(),
            terms,
            phi_bracket,
        })
    }

    pub fn curve(&self) -> &GridImmersion {
        &self.curve
    }

    pub fn terms(&self) -> &ForceTerms {
        &self.terms
    }

    /// The base force `f(G)`.
    pub fn force(&self) -> &VectorField {
        &self.terms.accel
    }

    fn grid(&self) -> &Grid {
        self.curve.grid()
    }

    /// `δf` for the perturbation `h`.
    pub fn apply(&self, h: &VectorField) -> VectorField {
        let grid = self.grid();
        let geo = &self.terms.geometry;
        let (e1, e3, e4) = self.params.powers();
        let eps2 = self.params.epsilon * self.params.epsilon;
        let m = h.len();
        let mut d = grid.derivatives_vec(h, &[1, 2]).into_iter();
        let h1 = d.next().unwrap();
        let h2 = d.next().unwrap();
        let pos = self.curve.positions();
        let u = h.dot(&geo.normal);
        let dvol = grid.dtheta() * u.iter().zip(&geo.speed).map(|(a, l)| a * l).sum::<f64>();
        let dpressure = -e4 * self.params.rho * dvol / (geo.volume * geo.volume);
        let mut out = VectorField::zeros(m);
        for j in 0..m {
            let l = geo.speed[j];
            let g = geo.metric[j];
            let (t, n) = (geo.unit_tangent.at(j), geo.normal.at(j));
            let hj1 = h1.at(j);
            let stretch = (t[0] * hj1[0] + t[1] * hj1[1]) / l;
            let tilt = (n[0] * hj1[0] + n[1] * hj1[1]) / l;
            // δν = −tilt · T
            let second = geo.second.at(j);
            let second_dot_dnu = -tilt * (second[0] * t[0] + second[1] * t[1]);
            let hj2 = h2.at(j);
            let dh = -(hj2[0] * n[0] + hj2[1] * n[1]) / g
                - second_dot_dnu / g
                - 2.0 * geo.mean_curvature[j] * stretch;
            let p = pos.at(j);
            let g_dot_h = p[0] * h.x[j] + p[1] * h.y[j];
            let pv = self.terms.potential[j];
            let dv = -pv.phi * pv.v * eps2 * g_dot_h;
            let dphi = pv.dphi * eps2 * g_dot_h;
            let dsupport = u[j] - tilt * (p[0] * t[0] + p[1] * t[1]);
            let db = dv * self.phi_bracket[j]
                + pv.v * (-e3 * dh + e1 * (dphi * self.terms.support[j] + pv.phi * dsupport))
                + dpressure;
            let b = self.terms.bracket[j];
            let ratio = geo.measure_ratio[j];
            let normal_part = ratio * (stretch * b + db);
            let tangent_part = -ratio * b * tilt;
            out.set(
                j,
                [
                    normal_part * n[0] + tangent_part * t[0],
                    normal_part * n[1] + tangent_part * t[1],
                ],
            );
        }
        out
    }

    /// Coefficients of the operator in the frame variables `h = u ν + r τ`.
    pub fn coefficients(&self) -> WeaklyHyperbolicCoefficients {
        let grid = self.grid();
        let geo = &self.terms.geometry;
        let (e1, e3, e4) = self.params.powers();
        let eps2 = self.params.epsilon * self.params.epsilon;
        let kappa = &geo.mean_curvature;
        let dkappa = grid.derivative(kappa, 1);
        let dspeed = grid.derivative(&geo.speed, 1);
        let m = kappa.len();
        let mut c = WeaklyHyperbolicCoefficients::zeros(m);
        for j in 0..m {
            let ratio = geo.measure_ratio[j];
            let (l, g) = (geo.speed[j], geo.metric[j]);
            let pv = self.terms.potential[j];
            let b = self.terms.bracket[j];
            let (sn, st) = (self.terms.support[j], self.terms.tangential_support[j]);
            let big_phi = self.phi_bracket[j];
            let k = kappa[j];
            c.principal[j] = ratio * pv.v * e3 / g;
            c.normal_du[j] =
                ratio * (-pv.v * e3 * dspeed[j] / (l * g) - pv.v * e1 * pv.phi * st / l);
            c.normal_u[j] = ratio
                * (k * b - pv.phi * pv.v * eps2 * sn * big_phi
                    + pv.v * e3 * k * k
                    + pv.v * e1 * (pv.dphi * eps2 * sn * sn + pv.phi));
            c.normal_dr[j] = ratio * b;
            c.normal_r[j] = ratio
                * (b * dspeed[j] / l
                    + l * (-pv.phi * pv.v * eps2 * st * big_phi
                        + pv.v * e1 * (pv.dphi * eps2 * st * sn + pv.phi * st * k))
                    - pv.v * e3 * dkappa[j]);
            c.nonlocal_coefficient[j] = -ratio * e4 * self.params.rho / (geo.volume * geo.volume);
            c.nonlocal_weight[j] = l;
            c.tangential_r[j] = ratio * b * k;
            c.tangential_du[j] = -ratio * b / g;
        }
        c
    }
}

/// The linearized force restated for `h = u ν + r τ`:
///
/// ```text
/// ⟨δf, ν⟩   = a u_θθ + n₁ u_θ + n₀ u + q₁ r_θ + q₀ r + c(θ) ∫ u w dθ
/// ⟨δf, τ⟩/g = m₀ r + p₁ u_θ
/// ```
///
/// The second derivative acts only on the normal component; the tangential
/// component obeys an ODE. The Vol-variation term is the single nonlocal
/// kernel `c(θ) w(θ')` with `w = ℓ`.
#[derive(Clone, Debug, Serialize)]
pub struct WeaklyHyperbolicCoefficients {
    /// `a = (dμ_t/dμ) v ε⁻³ / g`
    pub principal: Vec<f64>,
    pub normal_du: Vec<f64>,
    pub normal_u: Vec<f64>,
    pub normal_dr: Vec<f64>,
    pub normal_r: Vec<f64>,
    pub nonlocal_coefficient: Vec<f64>,
    pub nonlocal_weight: Vec<f64>,
    pub tangential_r: Vec<f64>,
    pub tangential_du: Vec<f64>,
}

impl WeaklyHyperbolicCoefficients {
    fn zeros(m: usize) -> Self {
        let z = vec![0.0; m];
        Self {
            principal: z.clone(),
            normal_du: z.clone(),
            normal_u: z.clone(),
            normal_dr: z.clone(),
            normal_r: z.clone(),
            nonlocal_coefficient: z.clone(),
            nonlocal_weight: z.clone(),
            tangential_r: z.clone(),
            tangential_du: z,
        }
    }

    /// Ellipticity bounds `(ρ₀, ρ₁)` of the principal coefficient.
    pub fn ellipticity(&self) -> (f64, f64) {
        let lo = self.principal.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .principal
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Normal and tangential components `(⟨δf,ν⟩, ⟨δf,τ⟩/g)` for frame variables `(u, r)`.
    pub fn apply(&self, grid: &Grid, u: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (du, dr) = grid.derivative_pair(u, r, 1);
        let duu = grid.derivative(u, 2);
        let kernel = grid.dtheta()
            * u.iter()
                .zip(&self.nonlocal_weight)
                .map(|(a, w)| a * w)
                .sum::<f64>();
        let m = u.len();
        let normal = (0..m)
            .map(|j| {
                self.principal[j] * duu[j]
                    + self.normal_du[j] * du[j]
                    + self.normal_u[j] * u[j]
                    + self.normal_dr[j] * dr[j]
                    + self.normal_r[j] * r[j]
                    + self.nonlocal_coefficient[j] * kernel
            })
            .collect();
        let tangential = (0..m)
            .map(|j| self.tangential_r[j] * r[j] + self.tangential_du[j] * du[j])
            .collect();
        (normal, tangential)
    }
}

/// Frame variables `(u, r)` of `h = u ν + r τ` at a base curve.
pub fn frame_components(at: &LinearizedAt, h: &VectorField) -> (Vec<f64>, Vec<f64>) {
    let geo = &at.terms.geometry;
    let u = h.dot(&geo.normal);
    let r = h
        .dot(&geo.tangent)
        .iter()
        .zip(&geo.metric)
        .map(|(a, g)| a / g)
        .collect();
    (u, r)
}

pub fn apply_linearized(op: &LinearizedOperator, step: usize, h: &VectorField) -> VectorField {
    op.at[step].apply(h)
}

pub fn assemble_coefficients(op: &LinearizedOperator, step: usize) -> WeaklyHyperbolicCoefficients {
    op.at[step].coefficients()
}

/// Central differences of the nonlinear force against [`LinearizedAt::apply`].
#[derive(Clone, Debug, Serialize)]
pub struct FdConsistency {
    pub deltas: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Sup-norm gap between `(f(G+δh) − f(G−δh))/2δ` and `δf(h)` for each `δ`,
/// with the fitted log-log slope.
pub fn fd_consistency(
    curve: &GridImmersion,
    params: &ForceParams,
    h: &VectorField,
    deltas: &[f64],
) -> Result<FdConsistency> {
    let lin = LinearizedAt::new(curve, params)?.apply(h);
    let errors = deltas
        .par_iter()
        .map(|&d| {
            let plus = crate::dynamics::acceleration(
                &curve.moved_to(curve.positions().axpy(d, h)),
                params,
            )?;
            let minus = crate::dynamics::acceleration(
                &curve.moved_to(curve.positions().axpy(-d, h)),
                params,
            )?;
            Ok(plus.sub(&minus).scale(0.5 / d).sub(&lin).max_abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = loglog_slope(deltas, &errors);
    Ok(FdConsistency {
        deltas: deltas.to_vec(),
        errors,
        slope,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

/// The linearized force along a base trajectory sampled at every time step.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub times: Vec<f64>,
    pub at: Vec<LinearizedAt>,
}

impl LinearizedOperator {
    pub fn from_curves(
        times: Vec<f64>,
        curves: &[GridImmersion],
        params: &ForceParams,
    ) -> Result<Self> {
        if times.len() != curves.len() || times.is_empty() {
            return Err(Error::config(
                "base curves and times must be nonempty and of equal length",
            ));
        }
        let at = curves
            .par_iter()
            .map(|c| LinearizedAt::new(c, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times, at })
    }

    /// Linearization along a trajectory stored at every step.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        if traj.samples.len() != traj.steps + 1 {
            return Err(Error::config(
                "linearization needs a trajectory stored at every step",
            ));
        }
        let curves: Vec<GridImmersion> = (0..traj.samples.len()).map(|i| traj.curve(i)).collect();
        Self::from_curves(traj.times(), &curves, &traj.params)
    }

    /// Time-independent base.
    pub fn frozen(
        curve: &GridImmersion,
        params: &ForceParams,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        let at = LinearizedAt::new(curve, params)?;
        let dt = horizon / steps as f64;
        Ok(Self {
            times: (0..=steps).map(|n| n as f64 * dt).collect(),
            at: vec![at; steps + 1],
        })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        self.at[0].grid()
    }

    /// Largest stable step `4/(M √a_max)` over the base.
    pub fn stability_limit(&self) -> f64 {
        let a_max = self
            .at
            .iter()
            .map(|at| at.coefficients().ellipticity().1)
            .fold(0.0, f64::max);
        4.0 / (self.grid().len() as f64 * a_max.sqrt())
    }
}

/// A solution of the linear evolution on the operator's time grid.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub times: Vec<f64>,
    pub h: Vec<VectorField>,
    pub rate: Vec<VectorField>,
    pub accel: Vec<VectorField>,
}

impl LinearSolution {
    pub fn frames(&self) -> impl Iterator<Item = SpacetimeFrame<'_>> {
        (0..self.times.len()).map(move |i| SpacetimeFrame {
            t: self.times[i],
            value: &self.h[i],
            rate: &self.rate[i],
            accel: &self.accel[i],
        })
    }
}

/// Solves `∂_tt h = L(t) h + W(t)`, `h(0) = h₀`, `∂_th(0) = h₁` by velocity Verlet
/// on the operator's uniform time grid.
pub fn solve_linearized(
    op: &LinearizedOperator,
    forcing: &[VectorField],
    h0: &VectorField,
    h1: &VectorField,
) -> Result<LinearSolution> {
    let n = op.times.len();
    if forcing.len() != n {
        return Err(Error::config(format!(
            "forcing has {} samples, time grid has {n}",
            forcing.len()
        )));
    }
    if n < 2 {
        return Err(Error::config("linear solve needs at least one time step"));
    }
    let dt = op.times[1] - op.times[0];
    if op
        .times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs())
    {
        return Err(Error::config("linear solve needs a uniform time grid"));
    }
    let limit = op.stability_limit();
    if !(dt > 0.0 && dt < limit) {
        return Err(Error::config(format!(
            "time step {dt:e} violates the CFL limit {limit:e} of the linear principal part"
        )));
    }
    let mut h = Vec::with_capacity(n);
    let mut rate = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    h.push(h0.clone());
    rate.push(h1.clone());
    accel.push(op.at[0].apply(h0).add(&forcing[0]));
    for i in 1..n {
        let half = rate[i - 1].axpy(0.5 * dt, &accel[i - 1]);
        let next = h[i - 1].axpy(dt, &half);
        let a = op.at[i].apply(&next).add(&forcing[i]);
        if !next.is_finite() || !a.is_finite() {
            return Err(Error::numerical(format!(
                "linear solve blew up at t = {}",
                op.times[i]
            )));
        }
        rate.push(half.axpy(0.5 * dt, &a));
        accel.push(a);
        h.push(next);
    }
    Ok(LinearSolution {
        times: op.times.clone(),
        h,
        rate,
        accel,
    })
}

/// Measured constant `|||h|||_{2,T} / (‖h₀‖₃ + ‖h₁‖₃ + |||W|||_{2,T})` of one solve.
pub fn stability_ratio(
    op: &LinearizedOperator,
    forcing: &[VectorField],
    h0: &VectorField,
    h1: &VectorField,
) -> Result<f64> {
    let sol = solve_linearized(op, forcing, h0, h1)?;
    let grid = op.grid();
    let horizon = *op.times.last().unwrap();
    let spec = NormSpec::new(2.0, horizon)?;
    let out = spacetime_norm(grid, sol.frames(), spec)?;
    let data = grid.sobolev_norm_vec(h0, 3.0)
        + grid.sobolev_norm_vec(h1, 3.0)
        + spacetime_norm_series(grid, &op.times, forcing, spec)?;
    if data == 0.0 {
        return Err(Error::config("stability ratio needs nonzero data"));
    }
    Ok(out / data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CurveData;
    use crate::potential::PotentialSpec;
    use std::f64::consts::PI;

    fn unit_circle(m: usize) -> (GridImmersion, ForceParams) {
        let (pos, _) = CurveData::circle(1.0).sample(m).unwrap();
        (
            GridImmersion::new_reference(pos).unwrap(),
            ForceParams::new(PI, PI, PotentialSpec::zero_eta()).unwrap(),
        )
    }

    #[test]
    fn zero_perturbation() {
        let (c, p) = unit_circle(32);
        let at = LinearizedAt::new(&c, &p).unwrap();
        assert_eq!(at.apply(&VectorField::zeros(32)).max_abs(), 0.0);
    }

    #[test]
    fn circle_principal_coefficient_is_one() {
        let (c, p) = unit_circle(32);
        let coeffs = LinearizedAt::new(&c, &p).unwrap().coefficients();
        let (lo, hi) = coeffs.ellipticity();
        assert!((lo - 1.0).abs() < 1e-13 && (hi - 1.0).abs() < 1e-13);
    }

    #[test]
    fn normal_cosine_modes_are_eigenfields() {
        let (c, p) = unit_circle(64);
        let at = LinearizedAt::new(&c, &p).unwrap();
        let normal = c.geometry().unwrap().normal;
        let theta = c.grid().nodes();
        for k in 1..=5 {
            let u: Vec<f64> = theta.iter().map(|t| (k as f64 * t).cos()).collect();
            let h = VectorField::scaled_by(&u, &normal);
            let expect = h.scale(-((k * k) as f64 - 1.0));
            assert!(at.apply(&h).sub(&expect).max_abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (c, p) = unit_circle(32);
        let op = LinearizedOperator::frozen(&c, &p, 0.5, 50).unwrap();
        let z = VectorField::zeros(32);
        let sol = solve_linearized(&op, &vec![z.clone(); 51], &z, &z).unwrap();
        assert!(sol.h.iter().all(|h| h.max_abs() == 0.0));
    }

    #[test]
    fn cfl_violation_is_a_configuration_error() {
        let (c, p) = unit_circle(64);
        let op = LinearizedOperator::frozen(&c, &p, 1.0, 10).unwrap();
        let z = VectorField::zeros(64);
        let res = solve_linearized(&op, &vec![z.clone(); 11], &z, &z);
        assert!(matches!(res, Err(Error::Config(_))));
    }
}
