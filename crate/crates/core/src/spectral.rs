//! Periodic spectral calculus on the circle.
//!
//! Samples live on the uniform grid `θ_j = 2πj/M`. Mode coefficients use the
//! normalization `û_k = (1/M) Σ_j u_j e^{-ikθ_j}` with `k ∈ [-M/2, M/2)`; the
//! Nyquist index `M/2` is reported as `k = -M/2`.
//!
//! Sobolev norms follow `‖u‖²_{H^s} = Σ_k (1+k²)^s |û_k|²`. Planar vector
//! fields are transformed as `z = x + iy`, so `‖(x, y)‖²_{H^s} = ‖x‖² + ‖y‖²`
//! comes out of a single transform.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::VectorField;

/// Quintic smoothstep `6x⁵ − 15x⁴ + 10x³`, clamped to 0 below 0 and 1 above 1.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

/// Validated real samples of a periodic function.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSamples {
    values: Vec<f64>,
}

impl PeriodicSamples {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_grid_size(values.len())?;
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("sample {j} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = std::f64::consts::TAU / m as f64;
        Self::new((0..m).map(|j| f(h * j as f64)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn check_grid_size(m: usize) -> Result<()> {
    if m < 16 || !m.is_power_of_two() {
        return Err(Error::config(format!(
            "grid size M = {m} must be a power of two with M >= 16"
        )));
    }
    Ok(())
}

/// Fourier coefficients in FFT storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCoefficients {
    coeffs: Vec<Complex64>,
}

impl ModeCoefficients {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of wavenumber `k`, `-M/2 <= k < M/2`.
    pub fn get(&self, k: i64) -> Complex64 {
        let m = self.coeffs.len() as i64;
        assert!(
            -m / 2 <= k && k < m / 2,
            "wavenumber {k} outside [-M/2, M/2)"
        );
        self.coeffs[k.rem_euclid(m) as usize]
    }

    /// `(k, û_k)` pairs in FFT storage order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let m = self.coeffs.len();
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (wavenumber(i, m), *c))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }
}

#[inline]
fn wavenumber(index: usize, m: usize) -> i64 {
    if index < m / 2 {
        index as i64
    } else {
        index as i64 - m as i64
    }
}

/// FFT plans and wavenumber tables for one grid size. Cheap to clone.
#[derive(Clone)]
pub struct Grid {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Arc<Vec<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("m", &self.m).finish()
    }
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        check_grid_size(m)?;
        let mut planner = FftPlanner::new();
        let k = (0..m).map(|i| wavenumber(i, m) as f64).collect();
        Ok(Self {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            k: Arc::new(k),
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dtheta(&self) -> f64 {
        std::f64::consts::TAU / self.m as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.dtheta();
        (0..self.m).map(|j| h * j as f64).collect()
    }

    pub fn nyquist(&self) -> usize {
        self.m / 2
    }

    fn forward_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.forward.process(&mut buf);
        let inv_m = 1.0 / self.m as f64;
        for c in &mut buf {
            *c *= inv_m;
        }
        buf
    }

    fn inverse_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.inverse.process(&mut buf);
        buf
    }

    fn pack(&self, re: &[f64], im: Option<&[f64]>) -> Vec<Complex64> {
        assert_eq!(re.len(), self.m, "sample count does not match grid");
        match im {
            Some(im) => re
                .iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(*a, *b))
                .collect(),
            None => re.iter().map(|a| Complex64::new(*a, 0.0)).collect(),
        }
    }

    pub fn modes(&self, u: &[f64]) -> ModeCoefficients {
        ModeCoefficients {
            coeffs: self.forward_complex(self.pack(u, None)),
        }
    }

    /// Real part of the inverse transform.
    pub fn samples(&self, modes: &ModeCoefficients) -> Vec<f64> {
        assert_eq!(modes.len(), self.m);
        self.inverse_complex(modes.coeffs.clone())
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Spectral multiplier for `d^order/dθ^order`. Odd orders drop the Nyquist mode
    /// so that the first-derivative matrix is exactly skew-symmetric.
    fn derivative_symbol(&self, index: usize, order: u32) -> Complex64 {
        if order % 2 == 1 && index == self.m / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.k[index]).powu(order)
    }

    fn apply_symbol(&self, spec: &[Complex64], f: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
        let buf = spec.iter().enumerate().map(|(i, c)| c * f(i)).collect();
        // forward_complex normalised by 1/M, so the unnormalised inverse is exact.
        self.inverse_complex(buf)
    }

    pub fn derivative(&self, u: &[f64], order: u32) -> Vec<f64> {
        let spec = self.forward_complex(self.pack(u, None));
        self.apply_symbol(&spec, |i| self.derivative_symbol(i, order))
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Derivatives of two real fields with one transform pair.
    pub fn derivative_pair(&self, a: &[f64], b: &[f64], order: u32) -> (Vec<f64>, Vec<f64>) {
        let spec = self.forward_complex(self.pack(a, Some(b)));
        let out = self.apply_symbol(&spec, |i| self.derivative_symbol(i, order));
        out.into_iter().map(|c| (c.re, c.im)).unzip()
    }

    pub fn derivative_vec(&self, f: &VectorField, order: u32) -> VectorField {
        let (x, y) = self.derivative_pair(&f.x, &f.y, order);
        VectorField { x, y }
    }

    /// Several derivative orders of a vector field from one forward transform.
    pub fn derivatives_vec(&self, f: &VectorField, orders: &[u32]) -> Vec<VectorField> {
        let spec = self.forward_complex(self.pack(&f.x, Some(&f.y)));
        orders
            .iter()
            .map(|&order| {
                let out = self.apply_symbol(&spec, |i| self.derivative_symbol(i, order));
                let (x, y) = out.into_iter().map(|c| (c.re, c.im)).unzip();
                VectorField { x, y }
            })
            .collect()
    }

    fn weighted_energy(&self, spec: &[Complex64], s: f64) -> f64 {
        spec.iter()
            .zip(self.k.iter())
            .map(|(c, k)| (1.0 + k * k).powf(s) * c.norm_sqr())
            .sum()
    }

    pub fn sobolev_norm(&self, u: &[f64], s: f64) -> f64 {
        let spec = self.forward_complex(self.pack(u, None));
        self.weighted_energy(&spec, s).sqrt()
    }

    pub fn sobolev_norm_vec(&self, f: &VectorField, s: f64) -> f64 {
        let spec = self.forward_complex(self.pack(&f.x, Some(&f.y)));
        self.weighted_energy(&spec, s).sqrt()
    }

    fn truncation_factor(&self, index: usize, cutoff: f64) -> f64 {
        smoothstep(cutoff - self.k[index].abs())
    }

    /// Frequency-side smoothing `Π_N`: mode `k` is scaled by `S(N − |k|)`.
    /// A cutoff at or beyond the Nyquist index returns the input untouched.
    pub fn smooth_truncate(&self, u: &[f64], cutoff: f64) -> Result<Vec<f64>> {
        check_cutoff(cutoff)?;
        if cutoff >= self.nyquist() as f64 {
            return Ok(u.to_vec());
        }
        let spec = self.forward_complex(self.pack(u, None));
        Ok(self
            .apply_symbol(&spec, |i| {
                Complex64::new(self.truncation_factor(i, cutoff), 0.0)
            })
            .into_iter()
            .map(|c| c.re)
            .collect())
    }

    pub fn smooth_truncate_vec(&self, f: &VectorField, cutoff: f64) -> Result<VectorField> {
        check_cutoff(cutoff)?;
        if cutoff >= self.nyquist() as f64 {
            return Ok(f.clone());
        }
        let spec = self.forward_complex(self.pack(&f.x, Some(&f.y)));
        let (x, y) = self
            .apply_symbol(&spec, |i| {
                Complex64::new(self.truncation_factor(i, cutoff), 0.0)
            })
            .into_iter()
            .map(|c| (c.re, c.im))
            .unzip();
        Ok(VectorField { x, y })
    }

    /// Trapezoidal (spectrally accurate) integral over one period.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.dtheta() * u.iter().sum::<f64>()
    }
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::config(format!(
            "truncation level N = {cutoff} must be positive and finite"
        )));
    }
    Ok(())
}

pub fn to_modes(u: &PeriodicSamples) -> Result<ModeCoefficients> {
    Ok(Grid::new(u.len())?.modes(u.values()))
}

pub fn from_modes(modes: &ModeCoefficients) -> Result<PeriodicSamples> {
    PeriodicSamples::new(Grid::new(modes.len())?.samples(modes))
}

pub fn sobolev_norm(u: &PeriodicSamples, s: f64) -> Result<f64> {
    check_order(s)?;
    Ok(Grid::new(u.len())?.sobolev_norm(u.values(), s))
}

pub fn smooth_truncate(u: &PeriodicSamples, cutoff: f64) -> Result<PeriodicSamples> {
    let grid = Grid::new(u.len())?;
    PeriodicSamples::new(grid.smooth_truncate(u.values(), cutoff)?)
}

fn check_order(s: f64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::config(format!("Sobolev order s = {s} must be >= 0")));
    }
    Ok(())
}

/// Sobolev order and time horizon of a spacetime norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub s: f64,
    pub horizon: f64,
}

impl NormSpec {
    pub fn new(s: f64, horizon: f64) -> Result<Self> {
        check_order(s)?;
        if !(horizon > 0.0) {
            return Err(Error::config(format!(
                "time horizon T = {horizon} must be > 0"
            )));
        }
        Ok(Self { s, horizon })
    }
}

/// One time sample of a field together with its first two time derivatives.
#[derive(Clone, Copy, Debug)]
pub struct SpacetimeFrame<'a> {
    pub t: f64,
    pub value: &'a VectorField,
    pub rate: &'a VectorField,
    pub accel: &'a VectorField,
}

impl SpacetimeFrame<'_> {
    fn layered_norm(&self, grid: &Grid, s: f64) -> f64 {
        grid.sobolev_norm_vec(self.value, s)
            + grid.sobolev_norm_vec(self.rate, s - 1.0)
            + grid.sobolev_norm_vec(self.accel, s - 2.0)
    }
}

fn time_slack(horizon: f64) -> f64 {
    1e-9 * horizon.max(1.0)
}

/// `|||u|||_{s,T} = sup_{t ≤ T} Σ_{i=0}^{2} ‖∂_t^i u‖_{H^{s−i}}` over the stored samples.
pub fn spacetime_norm<'a>(
    grid: &Grid,
    frames: impl IntoIterator<Item = SpacetimeFrame<'a>>,
    spec: NormSpec,
) -> Result<f64> {
    if spec.s < 2.0 {
        return Err(Error::config(format!(
            "spacetime norm needs s >= 2 (got s = {})",
            spec.s
        )));
    }
    let slack = time_slack(spec.horizon);
    let mut sup: f64 = 0.0;
    let mut t_max = f64::NEG_INFINITY;
    let mut any = false;
    for frame in frames {
        if frame.t > spec.horizon + slack {
            continue;
        }
        any = true;
        t_max = t_max.max(frame.t);
        sup = sup.max(frame.layered_norm(grid, spec.s));
    }
    if !any || t_max < spec.horizon - slack {
        return Err(Error::config(format!(
            "samples end at t = {t_max} before the horizon T = {}",
            spec.horizon
        )));
    }
    Ok(sup)
}

/// Weights of the three-point Lagrange first and second derivative at `x`.
fn three_point_weights(nodes: [f64; 3], x: f64) -> ([f64; 3], [f64; 3]) {
    let [x0, x1, x2] = nodes;
    let d0 = (x0 - x1) * (x0 - x2);
    let d1 = (x1 - x0) * (x1 - x2);
    let d2 = (x2 - x0) * (x2 - x1);
    (
        [
            (2.0 * x - x1 - x2) / d0,
            (2.0 * x - x0 - x2) / d1,
            (2.0 * x - x0 - x1) / d2,
        ],
        [2.0 / d0, 2.0 / d1, 2.0 / d2],
    )
}

/// First and second time derivatives of a sampled series by second-order
/// finite differences (one-sided at the ends).
pub fn time_derivatives(
    times: &[f64],
    values: &[VectorField],
) -> (Vec<VectorField>, Vec<VectorField>) {
    assert_eq!(times.len(), values.len());
    let n = times.len();
    let m = values.first().map_or(0, VectorField::len);
    if n < 3 {
        let rate = if n == 2 {
            let d = values[1].sub(&values[0]).scale(1.0 / (times[1] - times[0]));
            vec![d.clone(), d]
        } else {
            vec![VectorField::zeros(m); n]
        };
        return (rate, vec![VectorField::zeros(m); n]);
    }
    let mut rate = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        let idx = [c - 1, c, c + 1];
        let (w1, w2) = three_point_weights(idx.map(|k| times[k]), times[i]);
        let mut r = VectorField::zeros(m);
        let mut a = VectorField::zeros(m);
        for (s, &k) in idx.iter().enumerate() {
            r.add_assign_scaled(w1[s], &values[k]);
            a.add_assign_scaled(w2[s], &values[k]);
        }
        rate.push(r);
        accel.push(a);
    }
    (rate, accel)
}

/// Spacetime norm of a series without stored derivatives (forcing terms,
/// residuals); the time derivatives come from [`time_derivatives`].
pub fn spacetime_norm_series(
    grid: &Grid,
    times: &[f64],
    values: &[VectorField],
    spec: NormSpec,
) -> Result<f64> {
    let (rate, accel) = time_derivatives(times, values);
    spacetime_norm(
        grid,
        times.iter().zip(values).zip(rate.iter().zip(&accel)).map(
            |((&t, value), (rate, accel))| SpacetimeFrame {
                t,
                value,
                rate,
                accel,
            },
        ),
        spec,
    )
}

/// `sup_t ‖u(t)‖_{H^s}` over samples up to the horizon.
pub fn sup_sobolev_norm(grid: &Grid, times: &[f64], values: &[VectorField], spec: NormSpec) -> f64 {
    let slack = time_slack(spec.horizon);
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t <= spec.horizon + slack)
        .map(|(_, v)| grid.sobolev_norm_vec(v, spec.s))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn samples(m: usize, f: impl Fn(f64) -> f64) -> PeriodicSamples {
        PeriodicSamples::from_fn(m, f).unwrap()
    }

    #[test]
    fn constant_has_only_mean_mode() {
        let modes = to_modes(&samples(32, |_| 1.0)).unwrap();
        for (k, c) in modes.iter() {
            let expect = if k == 0 { 1.0 } else { 0.0 };
            assert!(
                (c.re - expect).abs() < 1e-14 && c.im.abs() < 1e-14,
                "k={k}: {c}"
            );
        }
    }

    #[test]
    fn single_harmonic_modes() {
        let modes = to_modes(&samples(64, |t| (3.0 * t).sin())).unwrap();
        for (k, c) in modes.iter() {
            let expect = match k {
                3 => Complex64::new(0.0, -0.5),
                -3 => Complex64::new(0.0, 0.5),
                _ => Complex64::new(0.0, 0.0),
            };
            assert!((c - expect).norm() < 1e-14, "k={k}: {c}");
        }
    }

    #[test]
    fn modes_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 32;
        let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let modes = to_modes(&PeriodicSamples::new(u.clone()).unwrap()).unwrap();
        for k in -(m as i64) / 2..(m as i64) / 2 {
            let direct: Complex64 = u
                .iter()
                .enumerate()
                .map(|(j, uj)| {
                    let th = TAU * j as f64 / m as f64;
                    Complex64::from_polar(*uj, -(k as f64) * th)
                })
                .sum::<Complex64>()
                / m as f64;
            assert!((modes.get(k) - direct).norm() < 1e-12, "k={k}");
        }
        let back = from_modes(&modes).unwrap();
        for (a, b) in back.values().iter().zip(&u) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            PeriodicSamples::new(vec![0.0; 24]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PeriodicSamples::new(vec![0.0; 8]),
            Err(Error::Config(_))
        ));
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(PeriodicSamples::new(v).is_err());
    }

    #[test]
    fn sobolev_norm_examples() {
        assert!((sobolev_norm(&samples(32, |_| 1.0), 3.7).unwrap() - 1.0).abs() < 1e-14);
        let u = samples(64, |t| (3.0 * t).sin());
        assert!((sobolev_norm(&u, 0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
        assert!((sobolev_norm(&u, 2.0).unwrap() - 50f64.sqrt()).abs() < 1e-12);
        assert!(sobolev_norm(&u, -1.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let u = samples(64, |t| (3.0 * t).sin() + 0.3 * (17.0 * t).cos() + 0.1);
        let same = smooth_truncate(&u, 32.0).unwrap();
        assert_eq!(same, u);
        let killed = smooth_truncate(&samples(64, |t| (3.0 * t).sin()), 2.0).unwrap();
        assert!(killed.values().iter().all(|v| v.abs() < 1e-15));
        // identity below N - 1, zero above N
        let grid = Grid::new(64).unwrap();
        let out = grid.smooth_truncate(u.values(), 10.0).unwrap();
        let expect: Vec<f64> = grid.nodes().iter().map(|t| (3.0 * t).sin() + 0.1).collect();
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(smooth_truncate(&u, 0.0).is_err());
        assert!(smooth_truncate(&u, -1.0).is_err());
    }

    #[test]
    fn fractional_cutoff_uses_smoothstep() {
        let grid = Grid::new(32).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|t| (4.0 * t).cos()).collect();
        let out = grid.smooth_truncate(&u, 4.5).unwrap();
        let factor = smoothstep(0.5);
        for (a, b) in out.iter().zip(&u) {
            assert!((a - factor * b).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_of_trig() {
        let grid = Grid::new(32).unwrap();
        let th = grid.nodes();
        let u: Vec<f64> = th.iter().map(|t| (5.0 * t).sin()).collect();
        let d1 = grid.derivative(&u, 1);
        let d2 = grid.derivative(&u, 2);
        for j in 0..32 {
            assert!((d1[j] - 5.0 * (5.0 * th[j]).cos()).abs() < 1e-12);
            assert!((d2[j] + 25.0 * u[j]).abs() < 1e-11);
        }
    }

    #[test]
    fn first_derivative_is_skew() {
        let grid = Grid::new(16).unwrap();
        let cols: Vec<Vec<f64>> = (0..16)
            .map(|i| {
                let mut e = vec![0.0; 16];
                e[i] = 1.0;
                grid.derivative(&e, 1)
            })
            .collect();
        for i in 0..16 {
            for j in 0..16 {
                assert!((cols[j][i] + cols[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn parseval_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::new(64).unwrap();
        let amps: Vec<(f64, f64)> = (0..20)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let u: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|t| {
                amps.iter()
                    .enumerate()
                    .map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin())
                    .sum()
            })
            .collect();
        let l2 = (grid.integrate(&u.iter().map(|v| v * v).collect::<Vec<_>>()) / (2.0 * PI)).sqrt();
        let h0 = grid.sobolev_norm(&u, 0.0);
        assert!((l2 - h0).abs() < 1e-10 * h0);
    }

    fn frame_norm(t: f64) -> f64 {
        let n = |s: f64| (10f64.powf(s) * 0.5).sqrt();
        t.sin().abs() * n(2.0) + t.cos().abs() * n(1.0) + t.sin().abs() * n(0.0)
    }

    #[test]
    fn spacetime_norm_examples() {
        let grid = Grid::new(32).unwrap();
        let ones = VectorField::new(vec![1.0; 32], vec![0.0; 32]);
        let zero = VectorField::zeros(32);
        let frames = [SpacetimeFrame {
            t: 0.0,
            value: &ones,
            rate: &zero,
            accel: &zero,
        }];
        let n = spacetime_norm(&grid, frames, NormSpec::new(2.0, 1e-12).unwrap()).unwrap();
        assert!((n - 1.0).abs() < 1e-14);

        let times: Vec<f64> = (0..=30).map(|i| 0.1 * i as f64).collect();
        let values: Vec<VectorField> = times.iter().map(|t| ones.scale(*t)).collect();
        let frames = times.iter().zip(&values).map(|(t, v)| SpacetimeFrame {
            t: *t,
            value: v,
            rate: &ones,
            accel: &zero,
        });
        let n = spacetime_norm(&grid, frames, NormSpec::new(2.0, 3.0).unwrap()).unwrap();
        assert!((n - 4.0).abs() < 1e-12, "{n}");

        let th = grid.nodes();
        let base: Vec<f64> = th.iter().map(|t| (3.0 * t).sin()).collect();
        let times: Vec<f64> = (0..=1000).map(|i| 1e-3 * i as f64).collect();
        let mk = |c: f64| VectorField::new(base.iter().map(|b| c * b).collect(), vec![0.0; 32]);
        let vals: Vec<_> = times.iter().map(|t| mk(t.sin())).collect();
        let rates: Vec<_> = times.iter().map(|t| mk(t.cos())).collect();
        let accs: Vec<_> = times.iter().map(|t| mk(-t.sin())).collect();
        let frames = (0..times.len()).map(|i| SpacetimeFrame {
            t: times[i],
            value: &vals[i],
            rate: &rates[i],
            accel: &accs[i],
        });
        let n = spacetime_norm(&grid, frames, NormSpec::new(2.0, 1.0).unwrap()).unwrap();
        let fine = (0..=100_000)
            .map(|i| frame_norm(1e-5 * i as f64))
            .fold(0.0, f64::max);
        assert!((n - fine).abs() < 1e-4, "{n} vs {fine}");
    }

    #[test]
    fn spacetime_norm_rejects_low_order_and_short_data() {
        let grid = Grid::new(16).unwrap();
        let z = VectorField::zeros(16);
        let frames = [SpacetimeFrame {
            t: 0.0,
            value: &z,
            rate: &z,
            accel: &z,
        }];
        assert!(spacetime_norm(&grid, frames, NormSpec::new(1.5, 1.0).unwrap()).is_err());
        assert!(spacetime_norm(&grid, frames, NormSpec::new(2.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn finite_difference_derivatives_are_second_order() {
        let times: Vec<f64> = (0..=50).map(|i| 0.02 * i as f64).collect();
        let values: Vec<VectorField> = times
            .iter()
            .map(|t| VectorField::new(vec![t.sin(); 16], vec![t * t; 16]))
            .collect();
        let (rate, accel) = time_derivatives(&times, &values);
        for (i, t) in times.iter().enumerate() {
            assert!((rate[i].x[0] - t.cos()).abs() < 5e-4);
            assert!((rate[i].y[0] - 2.0 * t).abs() < 1e-10);
            assert!((accel[i].y[0] - 2.0).abs() < 1e-8);
            assert!((accel[i].x[0] + t.sin()).abs() < 2e-2);
        }
    }
}
