//! Plain sample containers for scalar and planar vector fields on the grid.

use serde::{Deserialize, Serialize};

/// A 2-vector field sampled at the grid nodes, stored component-wise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "component lengths differ");
        Self { x, y }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            x: vec![0.0; m],
            y: vec![0.0; m],
        }
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(usize) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(m);
        for j in 0..m {
            let [a, b] = f(j);
            out.x[j] = a;
            out.y[j] = b;
        }
        out
    }

    /// Pointwise `scalar * direction`.
    pub fn scaled_by(scalar: &[f64], direction: &VectorField) -> Self {
        Self::from_fn(scalar.len(), |j| {
            [scalar[j] * direction.x[j], scalar[j] * direction.y[j]]
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[inline]
    pub fn at(&self, j: usize) -> [f64; 2] {
        [self.x[j], self.y[j]]
    }

    #[inline]
    pub fn set(&mut self, j: usize, v: [f64; 2]) {
        self.x[j] = v[0];
        self.y[j] = v[1];
    }

    /// Pointwise inner product with another field.
    pub fn dot(&self, other: &VectorField) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .zip(other.x.iter().zip(&other.y))
            .map(|((a, b), (c, d))| a * c + b * d)
            .collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.hypot(*b))
            .collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| c * v).collect(),
            y: self.y.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &VectorField) -> Self {
        Self {
            x: self
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| a + c * b)
                .collect(),
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add_assign_scaled(&mut self, c: f64, other: &VectorField) {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += c * b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += c * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// Rotation by +90 degrees, p -> p^perp = (-p_y, p_x).
    pub fn perp(&self) -> Self {
        Self {
            x: self.y.iter().map(|v| -v).collect(),
            y: self.x.clone(),
        }
    }
}
