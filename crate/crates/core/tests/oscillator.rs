use std::f64::consts::PI;

use proptest::prelude::*;
use qiclock::experiments::{fit_loglog_slope, log_grid};
use qiclock::oscillator::{
    backaction_floor, covariance_matrix, default_center, fd_estimator_bias, fd_estimator_variance, heisenberg_moments,
    initial_covariance, min_variance_over_sigma, stencil_prefactor, ForceEstimatorSpec, LinearMeasurementPlan,
    SigmaPlan, VACUUM,
};

fn zero(_: f64) -> f64 {
    0.0
}

fn is_psd(b: &[Vec<f64>], eps: f64) -> bool {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let diag = b[j][j] + eps - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if diag <= 0.0 {
            return false;
        }
        l[j][j] = diag.sqrt();
        for i in j + 1..n {
            l[i][j] = (b[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / l[j][j];
        }
    }
    true
}

#[test]
fn single_reading_has_no_backaction() {
    let cov = [[0.7, 0.1], [0.1, 0.5]];
    let plan = LinearMeasurementPlan { times: vec![0.4], sigmas: vec![0.3], initial_cov: cov };
    let b = covariance_matrix(&plan).unwrap();
    let c = (0.4f64.cos(), 0.4f64.sin());
    let init = c.0 * c.0 * 0.7 + 2.0 * c.0 * c.1 * 0.1 + c.1 * c.1 * 0.5;
    assert!((b[0][0] - init - 0.09).abs() < 1e-15);
}

#[test]
fn quarter_period_backaction() {
    let plan = LinearMeasurementPlan { times: vec![0.0, PI / 2.0], sigmas: vec![1.0, 1.0], initial_cov: VACUUM };
    let b = covariance_matrix(&plan).unwrap();
    let init = initial_covariance(&VACUUM, PI / 2.0, PI / 2.0);
    assert!((b[1][1] - init - 1.0 - 0.25).abs() < 1e-15);
    assert!((b[0][0] - 0.5 - 1.0).abs() < 1e-15);
}

#[test]
fn readings_a_half_period_apart_are_nondemolition() {
    let times: Vec<f64> = (0..5).map(|k| k as f64 * PI).collect();
    let plan = LinearMeasurementPlan { times: times.clone(), sigmas: vec![0.2; 5], initial_cov: VACUUM };
    let b = covariance_matrix(&plan).unwrap();
    for j in 0..5 {
        for l in 0..5 {
            let want = initial_covariance(&VACUUM, times[j], times[l]) + if j == l { 0.04 } else { 0.0 };
            assert!((b[j][l] - want).abs() < 1e-12, "({j},{l})");
        }
    }
}

#[test]
fn rejects_bad_plans() {
    let bad_cov = LinearMeasurementPlan { times: vec![0.0], sigmas: vec![1.0], initial_cov: [[0.1, 0.0], [0.0, 0.1]] };
    assert!(covariance_matrix(&bad_cov).is_err());
    let unordered = LinearMeasurementPlan { times: vec![1.0, 0.5], sigmas: vec![1.0, 1.0], initial_cov: VACUUM };
    assert!(covariance_matrix(&unordered).is_err());
    assert!(ForceEstimatorSpec::new(0.0, 3, zero).is_err());
    assert!(ForceEstimatorSpec::new(0.1, 1, zero).is_err());
}

#[test]
fn prefactor_leading_order() {
    let tau = 0.1f64;
    assert!((stencil_prefactor(tau) / (tau * tau / 12.0) - 1.0).abs() < 0.01);
    let exact = (2.0 * tau.cos() - 2.0 + tau * tau) / (tau * tau);
    assert!((stencil_prefactor(tau) - exact).abs() < 1e-15);
}

#[test]
fn variance_respects_floor() {
    for tau in log_grid(0.02, 1.0, 9) {
        let spec = ForceEstimatorSpec::new(tau, default_center(tau), zero).unwrap();
        for s2 in log_grid(0.01 / tau, 100.0 / tau, 41) {
            let v = fd_estimator_variance(&spec, &SigmaPlan::Uniform(s2.sqrt()), &VACUUM).unwrap();
            assert!(v >= backaction_floor(tau), "τ={tau} σ²={s2}: {v}");
        }
    }
}

#[test]
fn per_index_plan_matches_uniform() {
    let spec = ForceEstimatorSpec::new(0.2, 6, zero).unwrap();
    let a = fd_estimator_variance(&spec, &SigmaPlan::Uniform(1.7), &VACUUM).unwrap();
    let b = fd_estimator_variance(&spec, &SigmaPlan::PerIndex(vec![1.7; 7]), &VACUUM).unwrap();
    assert_eq!(a, b);
    assert!(fd_estimator_variance(&spec, &SigmaPlan::PerIndex(vec![1.7; 3]), &VACUUM).is_err());
}

#[test]
fn optimal_variance_scales_as_inverse_cube() {
    let taus = log_grid(0.02, 0.5, 10);
    let mins: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let spec = ForceEstimatorSpec::new(tau, default_center(tau), zero).unwrap();
            min_variance_over_sigma(&spec, &log_grid(0.01 / tau, 100.0 / tau, 401), &VACUUM).unwrap().1
        })
        .collect();
    let pts: Vec<(f64, f64)> = taus.iter().copied().zip(mins).collect();
    let fit = fit_loglog_slope(&pts).unwrap();
    assert!((fit.slope + 3.0).abs() < 0.1, "{}", fit.slope);
}

/// `q(t)` under `x = cos(ωt)` from rest.
fn driven_cos(omega: f64, t: f64) -> f64 {
    ((omega * t).cos() - t.cos()) / (1.0 - omega * omega)
}

#[test]
fn bias_matches_closed_form_and_is_second_order() {
    let omega = 0.3;
    let t = 2.0;
    let mut biases = Vec::new();
    let taus = [0.2f64, 0.1, 0.05];
    for tau in taus {
        let center = (t / tau).round() as usize + 1;
        let spec = ForceEstimatorSpec::new(tau, center, |s: f64| (omega * s).cos()).unwrap();
        assert!((spec.time() - t).abs() < 1e-12);
        let q = |s: f64| driven_cos(omega, s);
        let want = q(t) + (q(t + tau) + q(t - tau) - 2.0 * q(t)) / (tau * tau) - (omega * t).cos();
        let got = fd_estimator_bias(&spec).unwrap();
        assert!((got - want).abs() < 1e-9, "τ={tau}: {got} vs {want}");
        biases.push(got.abs());
    }
    let pts: Vec<(f64, f64)> = taus.iter().copied().zip(biases).collect();
    let fit = fit_loglog_slope(&pts).unwrap();
    assert!(fit.slope >= 1.9, "{}", fit.slope);

    let spec = ForceEstimatorSpec::new(0.1, 21, zero).unwrap();
    assert_eq!(fd_estimator_bias(&spec).unwrap(), 0.0);
}

#[test]
fn heisenberg_closed_forms() {
    let t = 2.3f64;
    let (q, p) = heisenberg_moments((0.4, -0.2), zero, t).unwrap();
    assert!((q - (0.4 * t.cos() - 0.2 * t.sin())).abs() < 1e-14);
    assert!((p - (-0.2 * t.cos() - 0.4 * t.sin())).abs() < 1e-14);

    let (q, p) = heisenberg_moments((0.0, 0.0), |_| 1.0, t).unwrap();
    assert!((q - (1.0 - t.cos())).abs() < 1e-10);
    assert!((p - t.sin()).abs() < 1e-10);

    let (q, p) = heisenberg_moments((0.0, 0.0), f64::sin, t).unwrap();
    assert!((q - (t.sin() - t * t.cos()) / 2.0).abs() < 1e-9);
    assert!((p - t * t.sin() / 2.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn covariance_is_symmetric_psd(
        gaps in proptest::collection::vec(0.01f64..2.0, 1..10),
        sigma in 0.05f64..3.0,
        squeeze in 0.2f64..5.0,
    ) {
        let mut times = vec![0.0];
        for g in &gaps {
            times.push(times.last().unwrap() + g);
        }
        let n = times.len();
        let cov = [[0.5 * squeeze, 0.0], [0.0, 0.5 / squeeze]];
        let plan = LinearMeasurementPlan { times, sigmas: vec![sigma; n], initial_cov: cov };
        let b = covariance_matrix(&plan).unwrap();
        for j in 0..n {
            prop_assert!(b[j][j] >= sigma * sigma);
            for l in 0..n {
                prop_assert_eq!(b[j][l], b[l][j]);
            }
        }
        prop_assert!(is_psd(&b, 1e-10));
    }

    #[test]
    fn floor_holds_everywhere(tau in 0.02f64..1.0, log_s2 in -6.0f64..8.0) {
        let spec = ForceEstimatorSpec::new(tau, default_center(tau), zero).unwrap();
        let v = fd_estimator_variance(&spec, &SigmaPlan::Uniform(log_s2.exp().sqrt()), &VACUUM).unwrap();
        prop_assert!(v >= backaction_floor(tau));
    }
}
