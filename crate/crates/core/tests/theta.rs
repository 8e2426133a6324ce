use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qiclock::theta::{theta3, theta3_multiplication_rhs, theta3_normalized, theta3_real, ThetaError, ThetaParam};
use qiclock::ThetaEvalConfig;

fn cfg() -> ThetaEvalConfig {
    ThetaEvalConfig::default()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Symmetric partial sum of the defining series, `|m| ≤ terms`.
fn direct(z: Complex64, tau: f64, terms: i64) -> Complex64 {
    (-terms..=terms)
        .map(|m| {
            let m = m as f64;
            (c(-PI * tau * m * m, 0.0) + c(0.0, 2.0 * PI * m) * z).exp()
        })
        .sum()
}

#[test]
fn matches_direct_series_large_tau() {
    let v = theta3(c(0.3, 0.0), 2.0, &cfg()).unwrap();
    let want = direct(c(0.3, 0.0), 2.0, 100);
    assert!((v - want).norm() < 1e-12 * want.norm(), "{v} vs {want}");
}

#[test]
fn modular_path_matches_slow_series() {
    let v = theta3(c(0.2, 0.0), 0.05, &cfg()).unwrap();
    let want = direct(c(0.2, 0.0), 0.05, 10_000);
    assert!((v - want).norm() < 1e-10 * want.norm(), "{v} vs {want}");
}

#[test]
fn real_path_agrees_with_complex_path() {
    for tau in [0.01, 0.3, 0.999, 1.0, 4.0] {
        for x in [-0.7, -0.1, 0.0, 0.25, 0.5, 3.3] {
            let a = theta3_real(x, tau, &cfg()).unwrap();
            let b = theta3(c(x, 0.0), tau, &cfg()).unwrap();
            assert!((a - b.re).abs() < 1e-12 * a.abs().max(1e-300) && b.im.abs() < 1e-12 * a.abs(), "{x} {tau}");
        }
    }
}

#[test]
fn normalized_examples() {
    for tau in [0.05, 1.0, 7.0] {
        assert!((theta3_normalized(c(0.0, 0.0), tau, &cfg()).unwrap() - 1.0).norm() < 1e-15);
    }
    let v = theta3_normalized(c(0.5, 0.0), 1.0, &cfg()).unwrap();
    assert!(v.re > 0.0 && v.re < 1.0 && v.im.abs() < 1e-15);
    let want = direct(c(0.25, 0.0), 0.8, 60) / direct(c(0.0, 0.0), 0.8, 60);
    assert!((theta3_normalized(c(0.25, 0.0), 0.8, &cfg()).unwrap() - want).norm() < 1e-12);
}

#[test]
fn multiplication_examples() {
    let lhs = |z: Complex64, w: Complex64, a: u32, b: u32, tau: f64| {
        direct(z, (a * b) as f64 * tau, 200) * direct(w, tau, 200)
    };
    let r = theta3_multiplication_rhs(1, 1, c(0.0, 0.0), c(0.0, 0.0), 0.9, &cfg()).unwrap();
    let t0 = theta3(c(0.0, 0.0), 0.9, &cfg()).unwrap();
    assert!((r - t0 * t0).norm() < 1e-12 * r.norm());

    let r = theta3_multiplication_rhs(1, 2, c(0.1, 0.0), c(0.3, 0.0), 0.7, &cfg()).unwrap();
    assert!((r - lhs(c(0.1, 0.0), c(0.3, 0.0), 1, 2, 0.7)).norm() < 1e-10);

    let r = theta3_multiplication_rhs(1, 1, c(0.05, 0.0), c(0.05, 0.0), 0.2, &cfg()).unwrap();
    let want = theta3(c(0.05, 0.0), 0.2, &cfg()).unwrap().powi(2);
    assert!((r - want).norm() < 1e-9);
}

#[test]
fn rejects_invalid_input() {
    assert!(matches!(ThetaParam::new(-1.0), Err(ThetaError::InvalidParam(_))));
    assert!(ThetaParam::new(f64::INFINITY).is_err());
    assert!(theta3_real(0.1, 0.0, &cfg()).is_err());
    assert!(theta3_multiplication_rhs(0, 1, c(0.0, 0.0), c(0.0, 0.0), 1.0, &cfg()).is_err());
    let tight = ThetaEvalConfig { rel_tol: 1e-12, max_terms: 3 };
    assert!(matches!(theta3(c(0.1, 0.0), 1e-4, &tight), Err(ThetaError::NonConvergent { .. })));
    assert!(ThetaEvalConfig { rel_tol: 2.0, max_terms: 10 }.validate().is_err());
}

#[test]
fn large_imaginary_argument_recentres() {
    // z = z0 + ibτ with b = 25: naive summation from m = 0 would start ~e^{39} off the peak.
    let (z0, tau, b) = (c(0.1, 0.0), 0.02, 25.0);
    let v = theta3(z0 + c(0.0, b * tau), tau, &cfg()).unwrap();
    let want = (c(PI * tau * b * b, 0.0) - c(0.0, 2.0 * PI * b) * z0).exp() * theta3(z0, tau, &cfg()).unwrap();
    assert!((v - want).norm() < 1e-11 * want.norm(), "{v} vs {want}");
}

proptest! {
    #[test]
    fn periodic_in_real_direction(x in -3.0f64..3.0, y in -0.5f64..0.5, tau in 0.02f64..20.0) {
        let z = c(x, y);
        let a = theta3(z + 1.0, tau, &cfg()).unwrap();
        let b = theta3(z, tau, &cfg()).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300) * 10.0);
    }

    #[test]
    fn even(x in -3.0f64..3.0, y in -0.5f64..0.5, tau in 0.02f64..20.0) {
        let z = c(x, y);
        let a = theta3(-z, tau, &cfg()).unwrap();
        let b = theta3(z, tau, &cfg()).unwrap();
        prop_assert!((a - b).norm() <= 1e-11 * b.norm());
    }

    #[test]
    fn quasi_periodic_in_imaginary_direction(x in -1.0f64..1.0, y in -0.3f64..0.3, tau in 0.1f64..5.0, b in -2i64..=2) {
        let z = c(x, y);
        let bf = b as f64;
        let lhs = theta3(z + c(0.0, bf * tau), tau, &cfg()).unwrap();
        let rhs = (c(PI * tau * bf * bf, 0.0) - c(0.0, 2.0 * PI * bf) * z).exp() * theta3(z, tau, &cfg()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-11 * rhs.norm());
    }

    #[test]
    fn normalized_real_values_bounded(x in -2.0f64..2.0, tau in 0.01f64..10.0) {
        let v = theta3_normalized(c(x, 0.0), tau, &cfg()).unwrap();
        prop_assert!(v.re <= 1.0 + 1e-12 && v.re > 0.0);
    }

    #[test]
    fn multiplication_identity(a in 1u32..4, b in 1u32..4, z in -0.5f64..0.5, w in -0.5f64..0.5, tau in 0.1f64..2.0) {
        let rhs = theta3_multiplication_rhs(a, b, c(z, 0.0), c(w, 0.0), tau, &cfg()).unwrap();
        let lhs = theta3(c(z, 0.0), (a * b) as f64 * tau, &cfg()).unwrap() * theta3(c(w, 0.0), tau, &cfg()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }
}
