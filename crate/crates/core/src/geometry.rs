//! Differential geometry of a sampled closed plane curve.
//!
//! Conventions: `τ = ∂_θF`, `ℓ = |τ| = √g`, `T = τ/ℓ`, outward normal
//! `ν = (T_y, −T_x)` for a counterclockwise curve, second fundamental form
//! `h̃ = −⟨∂_θθF, ν⟩` and `H = h̃/g`, so the unit circle has `H = 1`.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::spectral::Grid;

/// Relative size of the immersion threshold: `δ_imm = 1e-6 · mean |∂_θF⁰|`.
pub const DEGENERACY_FRACTION: f64 = 1e-6;

/// The fixed reference measure `dμ = m dθ` and the immersion threshold, both
/// frozen from the initial curve.
#[derive(Clone, Debug)]
pub struct Reference {
    grid: Grid,
    density: Vec<f64>,
    threshold: f64,
}

impl Reference {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Total reference mass `∫ dμ`.
    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.density)
    }

    /// The same measure with the density multiplied by `c` (used by amplitude rescaling).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            density: self.density.iter().map(|m| c * m).collect(),
            threshold: c * self.threshold,
        }
    }
}

/// Node positions of a closed curve together with its reference measure.
#[derive(Clone, Debug)]
pub struct GridImmersion {
    positions: VectorField,
    reference: Arc<Reference>,
}

impl GridImmersion {
    /// Makes `positions` its own reference: freezes `m = |∂_θF|` and `δ_imm`,
    /// and checks that the tangent turns exactly once.
    pub fn new_reference(positions: VectorField) -> Result<Self> {
        let grid = Grid::new(positions.len())?;
        if !positions.is_finite() {
            return Err(Error::config("initial curve has non-finite node positions"));
        }
        let tangent = grid.derivative_vec(&positions, 1);
        let density = tangent.norms();
        let mean = density.iter().sum::<f64>() / density.len() as f64;
        let threshold = DEGENERACY_FRACTION * mean;
        check_speed(&density, threshold)?;
        let turns = turning_number(&tangent);
        if turns.abs() != 1 {
            return Err(Error::config(format!(
                "initial curve has tangent turning number {turns}; a simple closed curve needs ±1"
            )));
        }
        if let Some((a, b)) = self_intersection(&positions) {
            log::warn!("initial curve polygon self-intersects (segments {a} and {b}); volume is not an enclosed area");
        }
        let reference = Arc::new(Reference {
            grid,
            density,
            threshold,
        });
        Ok(Self {
            positions,
            reference,
        })
    }

    /// A curve measured against an existing reference.
    pub fn with_reference(positions: VectorField, reference: Arc<Reference>) -> Self {
        assert_eq!(positions.len(), reference.grid.len(), "grid size mismatch");
        Self {
            positions,
            reference,
        }
    }

    /// Replaces the positions, keeping the reference.
    pub fn moved_to(&self, positions: VectorField) -> Self {
        Self::with_reference(positions, Arc::clone(&self.reference))
    }

    pub fn positions(&self) -> &VectorField {
        &self.positions
    }

    pub fn into_positions(self) -> VectorField {
        self.positions
    }

    pub fn reference(&self) -> &Arc<Reference> {
        &self.reference
    }

    pub fn grid(&self) -> &Grid {
        &self.reference.grid
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn geometry(&self) -> Result<GeometryBundle> {
        GeometryBundle::new(self)
    }
}

fn check_speed(speed: &[f64], threshold: f64) -> Result<()> {
    let (node, min_speed) =
        speed
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, s)| {
                if s < acc.1 || s.is_nan() {
                    (j, s)
                } else {
                    acc
                }
            });
    if !(min_speed > threshold) {
        return Err(Error::Degenerate {
            node,
            min_speed,
            threshold,
        });
    }
    Ok(())
}

/// Number of full turns of the sampled tangent direction.
pub fn turning_number(tangent: &VectorField) -> i64 {
    let m = tangent.len();
    let angle = |j: usize| tangent.y[j].atan2(tangent.x[j]);
    let mut total = 0.0;
    for j in 0..m {
        let mut d = angle((j + 1) % m) - angle(j);
        d -= TAU * (d / TAU).round();
        total += d;
    }
    (total / TAU).round() as i64
}

/// First pair of non-adjacent polygon edges that cross, if any.
pub fn self_intersection(positions: &VectorField) -> Option<(usize, usize)> {
    let m = positions.len();
    let p = |j: usize| positions.at(j % m);
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    for i in 0..m {
        for j in (i + 2)..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let (a, b, c, d) = (p(i), p(i + 1), p(j), p(j + 1));
            let d1 = orient(a, b, c);
            let d2 = orient(a, b, d);
            let d3 = orient(c, d, a);
            let d4 = orient(c, d, b);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// All pointwise geometric quantities of one curve snapshot.
#[derive(Clone, Debug)]
pub struct GeometryBundle {
    /// `τ = ∂_θF`
    pub tangent: VectorField,
    /// `∂_θθF`
    pub second: VectorField,
    /// `ℓ = |τ| = √g`, the density of `dμ_t`
    pub speed: Vec<f64>,
    /// `g = |τ|²`
    pub metric: Vec<f64>,
    pub unit_tangent: VectorField,
    pub normal: VectorField,
    /// `h̃ = −⟨∂_θθF, ν⟩`
    pub second_form: Vec<f64>,
    /// `H = h̃/g`
    pub mean_curvature: Vec<f64>,
    /// `dμ_t/dμ = ℓ/m`
    pub measure_ratio: Vec<f64>,
    pub volume: f64,
}

impl GeometryBundle {
    fn new(f: &GridImmersion) -> Result<Self> {
        let grid = f.grid();
        let mut d = grid.derivatives_vec(&f.positions, &[1, 2]).into_iter();
        let tangent = d.next().unwrap();
        let second = d.next().unwrap();
        let speed = tangent.norms();
        check_speed(&speed, f.reference.threshold)?;
        let metric: Vec<f64> = speed.iter().map(|l| l * l).collect();
        let unit_tangent = VectorField::from_fn(speed.len(), |j| {
            [tangent.x[j] / speed[j], tangent.y[j] / speed[j]]
        });
        let normal = VectorField::from_fn(speed.len(), |j| [unit_tangent.y[j], -unit_tangent.x[j]]);
        let second_form: Vec<f64> = second.dot(&normal).into_iter().map(|v| -v).collect();
        let mean_curvature = second_form
            .iter()
            .zip(&metric)
            .map(|(h, g)| h / g)
            .collect();
        let measure_ratio = speed
            .iter()
            .zip(&f.reference.density)
            .map(|(l, m)| l / m)
            .collect();
        let volume = signed_area(grid, &f.positions, &tangent);
        Ok(Self {
            tangent,
            second,
            speed,
            metric,
            unit_tangent,
            normal,
            second_form,
            mean_curvature,
            measure_ratio,
            volume,
        })
    }

    /// `∇f = g⁻¹ (∂_θf) ∂_θF`
    pub fn surface_gradient(&self, grid: &Grid, f: &[f64]) -> VectorField {
        let df = grid.derivative(f, 1);
        let c: Vec<f64> = df.iter().zip(&self.metric).map(|(d, g)| d / g).collect();
        VectorField::scaled_by(&c, &self.tangent)
    }

    /// `Δf = ℓ⁻¹ ∂_θ(ℓ⁻¹ ∂_θf)`
    pub fn laplace_beltrami(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let df = grid.derivative(f, 1);
        let flux: Vec<f64> = df.iter().zip(&self.speed).map(|(d, l)| d / l).collect();
        grid.derivative(&flux, 1)
            .iter()
            .zip(&self.speed)
            .map(|(d, l)| d / l)
            .collect()
    }

    /// Splits `h = u ν + h^⊤`.
    pub fn decompose(&self, h: &VectorField) -> (Vec<f64>, VectorField) {
        let u = h.dot(&self.normal);
        let tangential = h.sub(&VectorField::scaled_by(&u, &self.normal));
        (u, tangential)
    }

    /// `∫ f dμ_t`
    pub fn integrate(&self, grid: &Grid, f: &[f64]) -> f64 {
        grid.dtheta() * f.iter().zip(&self.speed).map(|(a, l)| a * l).sum::<f64>()
    }
}

/// `½ ∮ (x y_θ − y x_θ) dθ`, equal to `½ ∮ ⟨F, ν⟩ dμ_t`.
fn signed_area(grid: &Grid, positions: &VectorField, tangent: &VectorField) -> f64 {
    let sum: f64 = (0..positions.len())
        .map(|j| positions.x[j] * tangent.y[j] - positions.y[j] * tangent.x[j])
        .sum();
    0.5 * grid.dtheta() * sum
}

pub fn outward_normal(f: &GridImmersion) -> Result<VectorField> {
    Ok(f.geometry()?.normal)
}

pub fn mean_curvature(f: &GridImmersion) -> Result<Vec<f64>> {
    Ok(f.geometry()?.mean_curvature)
}

pub fn enclosed_volume(f: &GridImmersion) -> Result<f64> {
    Ok(f.geometry()?.volume)
}

pub fn surface_gradient(f: &GridImmersion, scalar: &[f64]) -> Result<VectorField> {
    Ok(f.geometry()?.surface_gradient(f.grid(), scalar))
}

pub fn laplace_beltrami(f: &GridImmersion, scalar: &[f64]) -> Result<Vec<f64>> {
    Ok(f.geometry()?.laplace_beltrami(f.grid(), scalar))
}

pub fn decompose(f: &GridImmersion, h: &VectorField) -> Result<(Vec<f64>, VectorField)> {
    Ok(f.geometry()?.decompose(h))
}

pub fn measure_ratio(f: &GridImmersion) -> Result<Vec<f64>> {
    Ok(f.geometry()?.measure_ratio)
}

/// Samples of a parametrized curve `θ ↦ c(θ)` on an `m`-point grid.
pub fn sample_curve(m: usize, c: impl Fn(f64) -> [f64; 2]) -> VectorField {
    let h = TAU / m as f64;
    VectorField::from_fn(m, |j| c(h * j as f64))
}
