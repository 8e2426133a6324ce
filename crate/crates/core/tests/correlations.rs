use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qiclock::clock::{label, ClockParams};
use qiclock::correlations::{
    asymptotic_c1, asymptotic_c2, c1_factor, c2_factor, c3_monte_carlo, c3_transfer_matrix, c3_transfer_matrix_with,
    drift_phase, factors_exact, factors_with_c3, initial_distribution, sharp_bound, step_distribution,
    CorrelationQuery, WalkKernel,
};
use qiclock::measurement::{oracle_moment, MeasurementParams};
use qiclock::rng::{experiment_id, StreamKey};
use qiclock::ThetaEvalConfig;

fn cfg() -> ThetaEvalConfig {
    ThetaEvalConfig::default()
}

fn query(d: usize, xi: f64, n0: i64, s2: f64, deltas: Vec<f64>, queries: Vec<(i64, usize)>) -> CorrelationQuery {
    CorrelationQuery { clock: ClockParams::new(d, xi, n0).unwrap(), meas: MeasurementParams::new(s2), deltas, queries }
}

fn oracle_gap(q: &CorrelationQuery) -> f64 {
    let f = factors_exact(q, &cfg()).unwrap();
    let o = oracle_moment(&q.clock, &q.deltas, &q.meas, &q.queries, &cfg()).unwrap();
    (f.product - o).norm()
}

#[test]
fn distributions_are_normalized() {
    for (d, s2, m) in [(3usize, 0.5, 0i64), (15, 0.5, -1), (101, 2.0, 3), (201, 201f64.powf(-0.65), 1)] {
        let p = step_distribution(d, s2, m, &cfg()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }
    for (d, xi, n0, msum) in [(15usize, 1.0, 0i64, 0i64), (31, 5.0, 2, -3), (201, 14.1, 0, 1)] {
        let p = initial_distribution(&ClockParams::new(d, xi, n0).unwrap(), msum, &cfg()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(initial_distribution(&ClockParams::new(11, 1.0, 0).unwrap(), 11, &cfg()).is_err());
}

#[test]
fn initial_distribution_tail_is_small() {
    let d = 201usize;
    let p = initial_distribution(&ClockParams::new(d, (d as f64).sqrt(), 0).unwrap(), 0, &cfg()).unwrap();
    let tail: f64 =
        p.iter().enumerate().filter(|(s, _)| label(*s, d).abs() as f64 > d as f64 / 4.0).map(|(_, x)| x).sum();
    assert!(tail < 1e-6, "{tail}");
}

#[test]
fn unshifted_walk_has_no_drift() {
    let k = WalkKernel::new(101, 0.7, 0, &cfg()).unwrap();
    assert!(k.mean().abs() < 1e-14);
    let mut rng = StreamKey::new(1, 2, 3).rng();
    let h = 50;
    assert!((0..1000).map(|_| k.sample(&mut rng)).all(|q| (-h..=h).contains(&q)));
}

#[test]
fn integer_steps_leave_no_walk_factor() {
    let q = query(101, 10.0, 0, 0.3, vec![1.0, 2.0, -1.0, 3.0, 1.0], vec![(1, 2), (-3, 4), (1, 5)]);
    assert!((c3_transfer_matrix(&q, &cfg()).unwrap() - 1.0).norm() < 1e-12);
    let mc = c3_monte_carlo(&q, 200, StreamKey::new(0, 1, 0), &cfg()).unwrap();
    assert_eq!(mc.mean, Complex64::new(1.0, 0.0));
    assert_eq!(mc.stderr_re, 0.0);
    assert_eq!(mc.stderr_im, 0.0);
}

#[test]
fn zero_weights_give_unit_factors() {
    let q = query(31, 2.0, 1, 0.9, vec![0.3, 0.5, 0.7], vec![(0, 1), (0, 3)]);
    let f = factors_exact(&q, &cfg()).unwrap();
    assert_eq!((f.c1, f.c2), (1.0, 1.0));
    assert_eq!(f.phase, Complex64::new(1.0, 0.0));
    assert!((f.c3 - 1.0).norm() < 1e-12);
}

#[test]
fn single_query_matches_oracle() {
    let q = CorrelationQuery::single(
        ClockParams::new(15, 15f64.sqrt(), 0).unwrap(),
        MeasurementParams::new(0.5),
        0.5,
        -1,
        4,
    );
    assert!(oracle_gap(&q) < 1e-9);
}

#[test]
fn multi_query_cases_match_oracle() {
    let cases = [
        query(11, 2.0, 0, 1.5, vec![0.3; 6], vec![(-1, 6)]),
        query(11, 2.0, 0, 1.5, vec![0.5; 6], vec![(1, 6)]),
        query(11, 2.0, 1, 1.5, vec![0.3, 0.7, 1.2, 0.1, 0.4, 0.9], vec![(-1, 2), (2, 5)]),
        query(21, 3.0, -2, 0.8, vec![0.3, -0.7, 1.2, 0.1, 0.4, 0.9], vec![(1, 1), (-2, 3), (1, 6)]),
        query(3, 1.0, 0, 0.5, vec![0.3, 0.6], vec![(1, 2)]),
        query(5, 1.0, 0, 0.5, vec![0.3, 0.6, 0.2], vec![(1, 1), (1, 3)]),
    ];
    for q in &cases {
        let gap = oracle_gap(q);
        assert!(gap < 1e-10, "{:?}: {gap}", q.queries);
    }
}

#[test]
fn drift_phase_example() {
    let p = drift_phase(11, &[0.5, 0.5, 0.5], &[(1, 2), (-1, 3)]);
    let want = Complex64::from_polar(1.0, 2.0 * PI * (1.0 - 1.5) / 11.0);
    assert!((p - want).norm() < 1e-15);
}

#[test]
fn monte_carlo_is_thread_independent() {
    let q = query(101, 10.0, 0, 0.4, vec![0.5; 40], vec![(1, 20), (-1, 40)]);
    let key = StreamKey::new(9, experiment_id("threads"), 0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| c3_monte_carlo(&q, 3000, key, &cfg()).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.mean.re.to_bits(), b.mean.re.to_bits());
    assert_eq!(a.mean.im.to_bits(), b.mean.im.to_bits());
    assert_eq!(a.stderr_re.to_bits(), b.stderr_re.to_bits());
}

#[test]
fn monte_carlo_agrees_with_transfer_matrix() {
    let q = query(51, 7.0, 0, 0.6, vec![0.5; 30], vec![(1, 10), (1, 30)]);
    let exact = c3_transfer_matrix(&q, &cfg()).unwrap();
    let mc = c3_monte_carlo(&q, 20_000, StreamKey::new(3, experiment_id("mc-vs-tm"), 0), &cfg()).unwrap();
    assert!((mc.mean.re - exact.re).abs() < 4.0 * mc.stderr_re, "{} vs {exact}", mc.mean);
    assert!((mc.mean.im - exact.im).abs() < 4.0 * mc.stderr_im.max(1e-12), "{} vs {exact}", mc.mean);
}

#[test]
fn direct_and_fast_convolution_agree() {
    for d in [15usize, 101, 257] {
        let q = query(d, (d as f64).sqrt(), 0, 0.5, vec![0.37; 25], vec![(1, 7), (-2, 19), (1, 25)]);
        let a = c3_transfer_matrix_with(&q, &cfg(), Some(false)).unwrap();
        let b = c3_transfer_matrix_with(&q, &cfg(), Some(true)).unwrap();
        assert!((a - b).norm() < 1e-10, "d={d}: {a} vs {b}");
    }
}

#[test]
fn asymptotic_forms_track_exact_factors() {
    assert_eq!(asymptotic_c1(1000.0, -0.5, 1.0, 0), 1.0);
    let want = (-PI / 2.0 * 1000f64.powf(-1.5)).exp();
    assert!((asymptotic_c1(1000.0, -0.5, 1.0, 1) - want).abs() < 1e-15);
    assert_eq!(asymptotic_c2(1000.0, -0.12, 1.0, &[0, 0]), 1.0);
    let want = (-PI * 1000f64.powf(-1.12) / 2.0).exp();
    assert!((asymptotic_c2(1000.0, -0.12, 1.0, &[-1, 0]) - want).abs() < 1e-15);

    let d = 4001usize;
    let df = d as f64;
    let clock = ClockParams::new(d, df.powf(-0.5), 0).unwrap();
    let exact = c1_factor(&clock, 1, &cfg()).unwrap();
    let gap = (asymptotic_c1(df, -0.5, 1.0, 1) / exact - 1.0).abs();
    assert!(gap < 1e-4, "c1 gap {gap}");
    let exact = c2_factor(d, df.powf(-0.12), &[-1], &cfg()).unwrap();
    let gap = (asymptotic_c2(df, -0.12, 1.0, &[-1]) / exact - 1.0).abs();
    assert!(gap < 1e-4, "c2 gap {gap}");
}

#[test]
fn sharp_measurements_respect_bound() {
    assert_eq!(sharp_bound(1e4, 0.0), 1.0);
    assert!((sharp_bound(1e4, 1.0) - 0.99).abs() < 1e-15);

    let d = 201usize;
    let df = d as f64;
    let t = 1.0;
    let n = (t * df.sqrt()).ceil() as usize;
    let q = CorrelationQuery::single(
        ClockParams::new(d, 1.0, 0).unwrap(),
        MeasurementParams::new(df.powf(-0.65)),
        0.5,
        1,
        n,
    );
    let mc = c3_monte_carlo(&q, 5000, StreamKey::new(4, experiment_id("sharp"), 0), &cfg()).unwrap();
    let f = factors_with_c3(&q, mc.mean, &cfg()).unwrap();
    assert!(f.product.norm() <= sharp_bound(df, t) * 1.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integer_schedules_are_neutral(
        half in 2usize..60,
        steps in proptest::collection::vec(-3i32..4, 1..100),
        m in -2i64..3,
    ) {
        let d = 2 * half + 1;
        let n = steps.len();
        let q = query(d, 1.0, 0, 0.5, steps.iter().map(|&s| s as f64).collect(), vec![(m, n.div_ceil(2)), (1, n)]);
        prop_assert!((c3_transfer_matrix(&q, &cfg()).unwrap() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn walk_factor_bounded(
        half in 2usize..40,
        deltas in proptest::collection::vec(-2.0f64..2.0, 1..30),
        m1 in -2i64..3,
        m2 in -2i64..3,
        s2 in 0.05f64..5.0,
    ) {
        let d = 2 * half + 1;
        let n = deltas.len();
        // With one step the two queries merge.
        let q = query(d, 3.0, 0, s2, deltas, vec![(m1, 1), (m2, n)]);
        prop_assert!(c3_transfer_matrix(&q, &cfg()).unwrap().norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn order_and_merging_do_not_matter(
        deltas in proptest::collection::vec(0.0f64..1.5, 6..7),
        m1 in -2i64..3, m2 in -2i64..3, m3 in -2i64..3,
    ) {
        let base = query(31, 4.0, 1, 0.7, deltas.clone(), vec![(m1, 2), (m2, 4), (m3, 6)]);
        let reordered = CorrelationQuery { queries: vec![(m3, 6), (m1, 2), (m2, 4)], ..base.clone() };
        let split = CorrelationQuery { queries: vec![(m1, 2), (m2 - 1, 4), (1, 4), (m3, 6)], ..base.clone() };
        let a = factors_exact(&base, &cfg()).unwrap().product;
        let b = factors_exact(&reordered, &cfg()).unwrap().product;
        let c = factors_exact(&split, &cfg()).unwrap().product;
        prop_assert!((a - b).norm() < 1e-10);
        prop_assert!((a - c).norm() < 1e-10);
    }

    #[test]
    fn factors_match_oracle(
        half in 1usize..10,
        xi in 0.3f64..8.0,
        s2 in 0.1f64..3.0,
        deltas in proptest::collection::vec(-1.5f64..1.5, 1..6),
        m1 in -1i64..2, m2 in -1i64..2,
    ) {
        let d = 2 * half + 1;
        let n = deltas.len();
        let mut queries = vec![(m1, 1)];
        if n > 1 { queries.push((m2, n)); }
        let q = query(d, xi, 0, s2, deltas, queries);
        prop_assume!(q.canonical().is_ok());
        prop_assert!(oracle_gap(&q) < 1e-8);
    }
}
