mod common;

use std::f64::consts::TAU;

use centralflow::spectral::{
    from_modes, smooth_truncate, sobolev_norm, to_modes, Grid, PeriodicSamples,
};
use centralflow::VectorField;
use common::dft_derivative;
use proptest::prelude::*;

/// Random real trigonometric polynomial of degree `< m/2`, sampled on `m` nodes.
fn trig_samples(m: usize, coeffs: &[(f64, f64)]) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let t = TAU * j as f64 / m as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin())
                .sum()
        })
        .collect()
}

fn grid_size() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![16usize, 32, 64, 128])
}

fn samples() -> impl Strategy<Value = (usize, Vec<f64>)> {
    grid_size().prop_flat_map(|m| (Just(m), prop::collection::vec(-5.0f64..5.0, m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modes_round_trip((_, u) in samples()) {
        let s = PeriodicSamples::new(u.clone()).unwrap();
        let back = from_modes(&to_modes(&s).unwrap()).unwrap();
        for (a, b) in back.values().iter().zip(&u) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn parseval((m, u) in samples()) {
        let l2 = sobolev_norm(&PeriodicSamples::new(u.clone()).unwrap(), 0.0).unwrap();
        let mean_square = u.iter().map(|v| v * v).sum::<f64>() / m as f64;
        prop_assert!((l2 * l2 - mean_square).abs() <= 1e-12 * (1.0 + mean_square));
    }

    #[test]
    fn sobolev_norms_increase_with_order((_, u) in samples(), s in 0.0f64..4.0, ds in 0.0f64..2.0) {
        let u = PeriodicSamples::new(u).unwrap();
        let lo = sobolev_norm(&u, s).unwrap();
        let hi = sobolev_norm(&u, s + ds).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-14));
    }

    #[test]
    fn smoothing_never_increases_norms((m, u) in samples(), cutoff in 0.1f64..40.0, s in 0.0f64..3.0) {
        let grid = Grid::new(m).unwrap();
        let smoothed = grid.smooth_truncate(&u, cutoff).unwrap();
        prop_assert!(grid.sobolev_norm(&smoothed, s) <= grid.sobolev_norm(&u, s) * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn smoothing_is_monotone_in_the_cutoff((m, u) in samples(), a in 0.1f64..20.0, b in 0.1f64..20.0, s in 0.0f64..3.0) {
        let grid = Grid::new(m).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = grid.sobolev_norm(&grid.smooth_truncate(&u, lo).unwrap(), s);
        let large = grid.sobolev_norm(&grid.smooth_truncate(&u, hi).unwrap(), s);
        prop_assert!(small <= large * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn integer_cutoffs_are_projections((m, u) in samples(), n in 1u32..40, k in 1u32..40) {
        let grid = Grid::new(m).unwrap();
        let once = grid.smooth_truncate(&u, n as f64).unwrap();
        let twice = grid.smooth_truncate(&once, n as f64).unwrap();
        let other = grid.smooth_truncate(&grid.smooth_truncate(&u, k as f64).unwrap(), n as f64).unwrap();
        let direct = grid.smooth_truncate(&u, n.min(k) as f64).unwrap();
        for j in 0..m {
            prop_assert!((once[j] - twice[j]).abs() <= 1e-11);
            prop_assert!((other[j] - direct[j]).abs() <= 1e-11);
        }
    }

    #[test]
    fn smoothing_is_linear((m, u) in samples(), c in -3.0f64..3.0, cutoff in 0.5f64..10.0) {
        let grid = Grid::new(m).unwrap();
        let v: Vec<f64> = u.iter().enumerate().map(|(j, x)| x.sin() + j as f64 / m as f64).collect();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + c * b).collect();
        let lhs = grid.smooth_truncate(&sum, cutoff).unwrap();
        let su = grid.smooth_truncate(&u, cutoff).unwrap();
        let sv = grid.smooth_truncate(&v, cutoff).unwrap();
        for j in 0..m {
            prop_assert!((lhs[j] - su[j] - c * sv[j]).abs() <= 1e-11 * (1.0 + c.abs()) * 10.0);
        }
    }

    #[test]
    fn derivative_matches_direct_summation(m in grid_size(), seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..4)) {
        let u = trig_samples(m, &seed);
        let grid = Grid::new(m).unwrap();
        let fast = grid.derivative(&u, 1);
        let slow = dft_derivative(&u);
        for j in 0..m {
            prop_assert!((fast[j] - slow[j]).abs() <= 1e-10);
        }
    }

    #[test]
    fn vector_norm_is_rotation_invariant((m, u) in samples(), angle in 0.0f64..TAU, s in 0.0f64..3.0) {
        let grid = Grid::new(m).unwrap();
        let f = VectorField::new(u.clone(), u.iter().map(|x| x.cos()).collect());
        let (c, sn) = (angle.cos(), angle.sin());
        let rotated = VectorField::from_fn(m, |j| {
            let [x, y] = f.at(j);
            [c * x - sn * y, sn * x + c * y]
        });
        let a = grid.sobolev_norm_vec(&f, s);
        let b = grid.sobolev_norm_vec(&rotated, s);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }
}

#[test]
fn sharp_cutoff_keeps_modes_below_n() {
    let m = 64;
    let coeffs: Vec<(f64, f64)> = (0..10).map(|k| (1.0 / (1 + k) as f64, 0.5)).collect();
    let u = trig_samples(m, &coeffs);
    let kept = smooth_truncate(&PeriodicSamples::new(u).unwrap(), 4.0).unwrap();
    let want = trig_samples(m, &coeffs[..4]);
    for (a, b) in kept.values().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}
