mod common;

use std::f64::consts::{PI, TAU};

use centralflow::geometry::{
    decompose, enclosed_volume, mean_curvature, outward_normal, self_intersection, turning_number,
    GridImmersion,
};
use centralflow::VectorField;
use common::{random_star, rng};
use proptest::prelude::*;

fn star(m: usize, seed: u64, amp: f64) -> GridImmersion {
    let mut r = rng(seed);
    GridImmersion::new_reference(random_star(m, &mut r, [0.2, -0.1], amp)).unwrap()
}

fn grid_size() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![64usize, 128, 256])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frame_is_orthonormal(m in grid_size(), seed in 0u64..10_000, amp in 0.0f64..0.4) {
        let geo = star(m, seed, amp).geometry().unwrap();
        for j in 0..m {
            let [tx, ty] = geo.unit_tangent.at(j);
            let [nx, ny] = geo.normal.at(j);
            prop_assert!((tx * tx + ty * ty - 1.0).abs() <= 1e-12);
            prop_assert!((nx * nx + ny * ny - 1.0).abs() <= 1e-12);
            prop_assert!((tx * nx + ty * ny).abs() <= 1e-12);
            // outward: ν is τ turned clockwise
            prop_assert!((tx * ny - ty * nx + 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn total_curvature_is_two_pi(m in grid_size(), seed in 0u64..10_000, amp in 0.0f64..0.4) {
        let curve = star(m, seed, amp);
        let geo = curve.geometry().unwrap();
        let integral: f64 = geo.mean_curvature.iter().zip(&geo.speed).map(|(h, l)| h * l).sum::<f64>()
            * curve.grid().dtheta();
        prop_assert!((integral - TAU).abs() <= 1e-9, "{}", integral);
        prop_assert_eq!(turning_number(&geo.tangent), 1);
        prop_assert!(self_intersection(curve.positions()).is_none());
    }

    #[test]
    fn curvature_scales_inversely(seed in 0u64..10_000, c in 0.2f64..5.0) {
        let curve = star(128, seed, 0.3);
        let scaled = GridImmersion::new_reference(curve.positions().scale(c)).unwrap();
        let h = mean_curvature(&curve).unwrap();
        let hs = mean_curvature(&scaled).unwrap();
        for j in 0..128 {
            prop_assert!((hs[j] * c - h[j]).abs() <= 1e-10 * (1.0 + h[j].abs()));
        }
        let v = enclosed_volume(&curve).unwrap();
        prop_assert!((enclosed_volume(&scaled).unwrap() - c * c * v).abs() <= 1e-12 * c * c * v);
    }

    #[test]
    fn rigid_motions_preserve_curvature_and_volume(seed in 0u64..10_000, angle in 0.0f64..TAU, dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let curve = star(128, seed, 0.3);
        let (c, s) = (angle.cos(), angle.sin());
        let moved = VectorField::from_fn(128, |j| {
            let [x, y] = curve.positions().at(j);
            [c * x - s * y + dx, s * x + c * y + dy]
        });
        let moved = GridImmersion::new_reference(moved).unwrap();
        let (h, hm) = (mean_curvature(&curve).unwrap(), mean_curvature(&moved).unwrap());
        for j in 0..128 {
            prop_assert!((h[j] - hm[j]).abs() <= 1e-9 * (1.0 + h[j].abs()));
        }
        let v = enclosed_volume(&curve).unwrap();
        prop_assert!((enclosed_volume(&moved).unwrap() - v).abs() <= 1e-10 * v);
        let (n, nm) = (outward_normal(&curve).unwrap(), outward_normal(&moved).unwrap());
        for j in 0..128 {
            let [x, y] = n.at(j);
            let [xm, ym] = nm.at(j);
            prop_assert!((c * x - s * y - xm).abs() <= 1e-10 && (s * x + c * y - ym).abs() <= 1e-10);
        }
    }

    #[test]
    fn decomposition_reassembles_the_field(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let curve = star(64, seed, 0.3);
        let h = VectorField::from_fn(64, |j| {
            let t = TAU * j as f64 / 64.0;
            [a * (2.0 * t).cos() + 0.3, b * (3.0 * t).sin() - 0.1]
        });
        let (u, tangential) = decompose(&curve, &h).unwrap();
        let geo = curve.geometry().unwrap();
        let rebuilt = VectorField::scaled_by(&u, &geo.normal).add(&tangential);
        prop_assert!(rebuilt.sub(&h).max_abs() <= 1e-12 * (1.0 + h.max_abs()));
        let normal_part = tangential.dot(&geo.normal);
        prop_assert!(normal_part.iter().all(|v| v.abs() <= 1e-12 * (1.0 + h.max_abs())));
    }
}

#[test]
fn star_area_matches_polar_integral() {
    // r = r0 + Σ a_k cos kθ + b_k sin kθ: area ½∫r² dθ = π(r0² + ½Σ(a_k² + b_k²))
    let m = 128;
    let (r0, modes) = (1.1, [(0.05, -0.02), (0.03, 0.01), (-0.01, 0.02)]);
    let pos = VectorField::from_fn(m, |j| {
        let t = TAU * j as f64 / m as f64;
        let r = r0
            + modes
                .iter()
                .enumerate()
                .map(|(i, (a, b))| a * ((i + 2) as f64 * t).cos() + b * ((i + 2) as f64 * t).sin())
                .sum::<f64>();
        [r * t.cos(), r * t.sin()]
    });
    let area = enclosed_volume(&GridImmersion::new_reference(pos).unwrap()).unwrap();
    let want = PI * (r0 * r0 + 0.5 * modes.iter().map(|(a, b)| a * a + b * b).sum::<f64>());
    assert!((area - want).abs() <= 1e-12, "{area} vs {want}");
}

#[test]
fn reversed_orientation_flips_volume_sign() {
    let curve = star(64, 3, 0.3);
    let p = curve.positions();
    let reversed = VectorField::from_fn(64, |j| p.at((64 - j) % 64));
    let v = enclosed_volume(&curve).unwrap();
    let vr = enclosed_volume(&GridImmersion::new_reference(reversed).unwrap()).unwrap();
    assert!((v + vr).abs() <= 1e-12 * v);
}
