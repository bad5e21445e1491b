#![allow(dead_code)]

use std::f64::consts::TAU;

use centralflow::VectorField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First derivative by direct trigonometric summation, Nyquist mode dropped.
pub fn dft_derivative(u: &[f64]) -> Vec<f64> {
    let m = u.len();
    let half = m as i64 / 2;
    let coeffs: Vec<(f64, f64)> = (-half + 1..half)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, uj) in u.iter().enumerate() {
                let a = -(k as f64) * TAU * j as f64 / m as f64;
                re += uj * a.cos();
                im += uj * a.sin();
            }
            (re / m as f64, im / m as f64)
        })
        .collect();
    (0..m)
        .map(|j| {
            let th = TAU * j as f64 / m as f64;
            (-half + 1..half)
                .zip(&coeffs)
                .map(|(k, (re, im))| {
                    let kf = k as f64;
                    // Re(i k c e^{ikθ})
                    -kf * (re * (kf * th).sin() + im * (kf * th).cos())
                })
                .sum()
        })
        .collect()
}

/// A smooth random star-shaped counterclockwise curve around `center`.
pub fn random_star(m: usize, rng: &mut ChaCha8Rng, center: [f64; 2], amp: f64) -> VectorField {
    let modes: Vec<(f64, f64)> = (2..6)
        .map(|k| {
            let a = amp / (k * k) as f64;
            (rng.random_range(-a..a), rng.random_range(-a..a))
        })
        .collect();
    let r0 = rng.random_range(0.8..1.3);
    VectorField::from_fn(m, |j| {
        let t = TAU * j as f64 / m as f64;
        let r = r0
            + modes
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let k = (i + 2) as f64;
                    a * (k * t).cos() + b * (k * t).sin()
                })
                .sum::<f64>();
        [center[0] + r * t.cos(), center[1] + r * t.sin()]
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
