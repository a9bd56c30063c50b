use proptest::prelude::*;
use qcdp::disorder::{calibrate, mix64, normal_quantile, unit_open, DisorderModel, Regime};
use qcdp::polymer_sim::{discretize_test_function, run_replicas, BlockSampler, TestFunction, Truncation, CELL_QUADRATURE_ORDER};
use qcdp::stats::*;

fn normals(n: usize, seed: u64, sd: f64) -> Vec<f64> {
    (0..n as u64).map(|k| sd * normal_quantile(unit_open(mix64(seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15))))).collect()
}

#[test]
fn constant_samples_are_flagged() {
    let s = summarize(&[2.5; 20]).unwrap();
    assert!(s.degenerate);
    assert_eq!(s.variance, 0.0);
    assert!(s.skewness.is_nan() && s.excess_kurtosis.is_nan());
    assert_eq!(summarize(&[1.0; 7]), Err(StatsError::TooFewSamples { n: 7, min: MIN_SAMPLES }));
    assert_eq!(summarize(&[1.0, 2.0, f64::NAN, 0.0, 1.0, 2.0, 3.0, 4.0]), Err(StatsError::NonFinite));
}

#[test]
fn normal_skewness_is_small() {
    let n = 100_000;
    let s = summarize(&normals(n, 1, 1.0)).unwrap();
    assert!(s.skewness.abs() < 4.0 * (6.0 / n as f64).sqrt(), "{}", s.skewness);
    assert!(s.excess_kurtosis.abs() < 4.0 * (24.0 / n as f64).sqrt());
    assert!((s.variance - 1.0).abs() < 4.0 * s.variance_se);
    // jackknife errors agree with the textbook normal-theory values
    assert!((s.skewness_se / (6.0 / n as f64).sqrt() - 1.0).abs() < 0.1);
    assert!((s.variance_se / (2.0 / n as f64).sqrt() - 1.0).abs() < 0.1);
}

#[test]
fn two_point_law() {
    let x: Vec<f64> = (0..10_000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let s = summarize(&x).unwrap();
    assert!((s.variance - 1.0).abs() < 1e-3);
    assert!((s.excess_kurtosis + 2.0).abs() < 1e-3);
    assert!(s.skewness.abs() < 1e-12);
}

#[test]
fn ks_against_target_law() {
    let v = 2.5f64;
    let d = ks_distance(&normals(10_000, 3, v.sqrt()), v).unwrap();
    assert!(d < 0.02, "{d}");
    assert_eq!(ks_distance(&[0.0; 100], 1.0).unwrap(), 0.5);
    assert!(ks_distance(&[0.0; 10], 0.0).is_err());
    // more samples from the target law shrink the distance on average
    let small: f64 = (0..20).map(|s| ks_distance(&normals(100, 100 + s, 1.0), 1.0).unwrap()).sum();
    let large: f64 = (0..20).map(|s| ks_distance(&normals(2000, 200 + s, 1.0), 1.0).unwrap()).sum();
    assert!(large < small);
}

#[test]
fn report_fields() {
    let x = normals(500, 9, 1.0);
    let r = StatsReport::new(&x, 1.0).unwrap();
    let s = summarize(&x).unwrap();
    assert_eq!((r.n, r.mean, r.var, r.skew, r.kurt), (500, s.mean, s.variance, s.skewness, s.excess_kurtosis));
    assert_eq!(r.ks, ks_distance(&x, 1.0).unwrap());
}

#[test]
fn lyapunov_sum_of_blocks() {
    assert_eq!(lyapunov_sum(&[vec![0.0; 10], vec![0.0; 10]]).value, 0.0);
    let l = lyapunov_sum(&[vec![1.0, -1.0], vec![2.0, 0.0]]);
    assert_eq!(l.value, 1.0 + 8.0);
    let empty: [Vec<f64>; 0] = [];
    assert_eq!(lyapunov_sum(&empty).value, 0.0);
}

#[test]
fn lyapunov_sum_at_zero_beta_and_trend() {
    let blocks_for = |n: usize, m: usize, theta: f64, replicas: usize| -> Vec<Vec<f64>> {
        let cal = calibrate(&DisorderModel::Gaussian, n, theta, Regime::QuasiCritical).unwrap();
        let phi = discretize_test_function(&TestFunction::square(1.0), n as f64, CELL_QUADRATURE_ORDER).unwrap();
        (1..=m)
            .map(|i| {
                let bs = BlockSampler::new(n, m, i, &cal, &phi, Truncation::default()).unwrap();
                run_replicas(replicas, 0, |r| bs.sample(5, r))
            })
            .collect()
    };
    let cold = blocks_for(16, 2, 16f64.ln(), 50);
    assert_eq!(lyapunov_sum(&cold).value, 0.0);
    // M = ⌊log N⌋: 2 blocks at N = 16, 4 blocks at N = 64
    let a = lyapunov_sum(&blocks_for(16, 2, 16f64.ln().sqrt(), 4000));
    let b = lyapunov_sum(&blocks_for(64, 4, 64f64.ln().sqrt(), 4000));
    assert!(b.value + 2.0 * b.stderr < a.value - 2.0 * a.stderr, "{a:?} {b:?}");
}

proptest! {
    #[test]
    fn summary_is_permutation_invariant(mut x in proptest::collection::vec(-10.0f64..10.0, 8..60), rot in 0usize..60) {
        let s = summarize(&x).unwrap();
        let k = rot % x.len();
        x.rotate_left(k);
        x.reverse();
        let t = summarize(&x).unwrap();
        prop_assert!((s.mean - t.mean).abs() <= 1e-12 * (1.0 + s.mean.abs()));
        prop_assert!((s.variance - t.variance).abs() <= 1e-10 * (1.0 + s.variance));
        if !s.degenerate {
            prop_assert!((s.skewness - t.skewness).abs() <= 1e-8 * (1.0 + s.skewness.abs()));
        }
    }

    #[test]
    fn summary_is_affine_equivariant(x in proptest::collection::vec(-10.0f64..10.0, 8..60), a in -5.0f64..5.0, c in 0.1f64..5.0) {
        let s = summarize(&x).unwrap();
        prop_assume!(s.variance > 1e-6);
        let y: Vec<f64> = x.iter().map(|v| c * v + a).collect();
        let t = summarize(&y).unwrap();
        prop_assert!((t.mean - (c * s.mean + a)).abs() <= 1e-10 * (1.0 + t.mean.abs()));
        prop_assert!((t.variance / (c * c * s.variance) - 1.0).abs() <= 1e-9);
        prop_assert!((t.skewness - s.skewness).abs() <= 1e-7 * (1.0 + s.skewness.abs()));
        prop_assert!((t.excess_kurtosis - s.excess_kurtosis).abs() <= 1e-7 * (1.0 + s.excess_kurtosis.abs()));
        prop_assert!((t.mean_se / (c * s.mean_se) - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn ks_is_scale_equivariant(x in proptest::collection::vec(-3.0f64..3.0, 1..80), v in 0.1f64..4.0, c in 0.2f64..5.0) {
        let d = ks_distance(&x, v).unwrap();
        let y: Vec<f64> = x.iter().map(|t| c * t).collect();
        prop_assert!((ks_distance(&y, c * c * v).unwrap() - d).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&d));
    }
}
