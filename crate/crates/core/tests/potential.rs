use std::io::Write;

use centralflow::potential::{adaptive_gauss_kronrod, check_growth, EtaTable, PotentialSpec};
use proptest::prelude::*;

fn spec() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        Just(PotentialSpec::zero_eta()),
        (-1.0f64..1.0).prop_map(|g| PotentialSpec::gaussian(g).unwrap()),
        (0.05f64..1.0, 0.0f64..3.0).prop_map(|(k, p)| PotentialSpec::power(k, p).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn density_is_positive_and_normalized(spec in spec(), s in 0.01f64..4.0) {
        prop_assert!(spec.v(s).unwrap() > 0.0);
        prop_assert!((spec.v(1.0).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature(spec in spec(), s in 0.05f64..4.0) {
        let a = spec.log_v(s).unwrap();
        let b = spec.log_v_quadrature(s).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn phi_is_the_log_derivative(spec in spec(), s in 0.2f64..3.0) {
        // −d log v/ds = φ, by central differences
        let d = 1e-5;
        let fd = -(spec.log_v(s + d).unwrap() - spec.log_v(s - d).unwrap()) / (2.0 * d);
        let phi = spec.phi(s).unwrap();
        prop_assert!((fd - phi).abs() <= 1e-7 * (1.0 + phi.abs()));
        let dfd = (spec.phi(s + d).unwrap() - spec.phi(s - d).unwrap()) / (2.0 * d);
        let dphi = spec.dphi(s).unwrap();
        prop_assert!((dfd - dphi).abs() <= 1e-6 * (1.0 + dphi.abs()));
    }

    #[test]
    fn power_potential_satisfies_its_growth_bound(k in 0.05f64..1.0, p in 0.0f64..3.0) {
        let spec = PotentialSpec::power(k, p).unwrap();
        let report = check_growth(&spec, p, (0.1, 0.99)).unwrap();
        prop_assert!(report.pass);
    }

    #[test]
    fn tabulated_linear_eta_reproduces_gaussian(g in -0.8f64..0.8, s in 0.1f64..3.0) {
        let w: Vec<f64> = (0..=80).map(|i| 0.05 + 0.05 * i as f64).collect();
        let eta: Vec<f64> = w.iter().map(|w| 2.0 * g * w).collect();
        let table = PotentialSpec::tabulated(EtaTable::new(w, eta).unwrap());
        let exact = PotentialSpec::gaussian(g).unwrap();
        prop_assert!((table.log_v(s).unwrap() - exact.log_v(s).unwrap()).abs() <= 1e-9);
        prop_assert!((table.phi(s).unwrap() - exact.phi(s).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn gaussian_closed_form() {
    let spec = PotentialSpec::gaussian(0.3).unwrap();
    for s in [0.1, 0.5, 1.0, 2.0, 3.5] {
        let want = (-0.3 * (s - 1.0f64)).exp();
        assert!((spec.v(s).unwrap() - want).abs() <= 1e-15 * want.max(1.0));
        assert_eq!(spec.phi(s).unwrap(), 0.3);
    }
}

#[test]
fn quadrature_handles_reversed_and_empty_intervals() {
    let f = |x: f64| x.cos();
    let forward = adaptive_gauss_kronrod(f, 0.0, 2.0, 1e-12).unwrap();
    let backward = adaptive_gauss_kronrod(f, 2.0, 0.0, 1e-12).unwrap();
    assert!((forward - 2f64.sin()).abs() <= 1e-12);
    assert!((forward + backward).abs() <= 1e-14);
    assert_eq!(adaptive_gauss_kronrod(f, 1.0, 1.0, 1e-12).unwrap(), 0.0);
}

#[test]
fn table_loaded_from_csv_matches_power() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "w,eta").unwrap();
    for i in 0..=200 {
        let w = 0.02 + 0.02 * i as f64;
        writeln!(file, "{w},{}", 0.4 * w * w * w).unwrap();
    }
    let table = PotentialSpec::tabulated(EtaTable::from_csv(file.path()).unwrap());
    let exact = PotentialSpec::power(0.4, 2.0).unwrap();
    for s in [0.3, 0.8, 1.5, 2.5] {
        let (a, b) = (table.log_v(s).unwrap(), exact.log_v(s).unwrap());
        assert!(
            (a - b).abs() <= 1e-6 * (1.0 + b.abs()),
            "s = {s}: {a} vs {b}"
        );
    }
}

#[test]
fn arguments_outside_the_table_are_errors() {
    let table = PotentialSpec::tabulated(
        EtaTable::new(vec![0.5, 1.0, 1.5, 2.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
    );
    assert!(table.v(5.0).is_err());
    assert!(table.phi(0.1).is_err());
}
