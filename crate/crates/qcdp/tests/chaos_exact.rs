use proptest::prelude::*;

use qcdp::chaos_exact::*;
use qcdp::disorder::{calibrate, Calibration, DisorderModel, Regime};
use qcdp::lattice_rw::{laplace_overlap, return_probabilities, transition_prob};
use qcdp::numerics::{adaptive_integral, csum};
use qcdp::polymer_sim::{discretize_test_function, TestFunction, CELL_QUADRATURE_ORDER};
use qcdp::{Field, LatticePoint};

fn quasi_critical(model: &DisorderModel, n: usize) -> Calibration {
    calibrate(model, n, (n as f64).ln().sqrt(), Regime::QuasiCritical).unwrap()
}

fn indicator_n(n: usize) -> Field {
    discretize_test_function(&TestFunction::square(1.0), n as f64, CELL_QUADRATURE_ORDER).unwrap()
}

fn direct_acf(phi: &Field) -> Vec<(LatticePoint, f64)> {
    let supp: Vec<_> = phi.support().collect();
    let mut out: std::collections::BTreeMap<(i64, i64), f64> = Default::default();
    for &(z, a) in &supp {
        for &(w, b) in &supp {
            let d = w - z;
            *out.entry((d.x1, d.x2)).or_default() += a * b;
        }
    }
    out.into_iter().map(|((a, b), v)| (LatticePoint::new(a, b), v)).collect()
}

/// E[(X^{(i)})²] from two independent walks: their difference D starts at
/// z − z' and each meeting at a time in (A, B] contributes a factor 1 + σ².
fn two_replica_oracle(n: usize, m: usize, i: usize, cal: &Calibration, phi: &Field) -> f64 {
    let (a, b) = ((i - 1) * n / m, i * n / m);
    let acf = direct_acf(phi);
    let reach = acf.iter().map(|(x, _)| x.x1.abs().max(x.x2.abs())).max().unwrap();
    let r = reach + 2 * b as i64 + 2;
    let side = (2 * r + 1) as usize;
    let idx = |x: i64, y: i64| ((y + r) as usize) * side + (x + r) as usize;
    // law of one step of the difference walk
    let mut step = Vec::new();
    for e in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        for f in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            step.push((e.0 - f.0, e.1 - f.1, 1.0 / 16.0));
        }
    }
    let propagate = |g: &Vec<f64>| {
        let mut out = vec![1.0; side * side];
        for y in -r + 2..=r - 2 {
            for x in -r + 2..=r - 2 {
                out[idx(x, y)] = step.iter().map(|&(dx, dy, p)| p * g[idx(x + dx, y + dy)]).sum();
            }
        }
        out
    };
    let mut g = vec![1.0; side * side];
    for t in (1..=b).rev() {
        g = propagate(&g);
        if t > a {
            g[idx(0, 0)] *= 1.0 + cal.sigma_sq;
        }
    }
    let f = propagate(&g);
    let s = csum(acf.iter().map(|(x, v)| v * (f[idx(x.x1, x.x2)] - 1.0)));
    cal.theta * s / (n as f64).powi(2)
}

#[test]
fn block_moments_match_two_replica_oracle() {
    for model in [DisorderModel::Gaussian, DisorderModel::Rademacher] {
        let n = 32;
        let cal = quasi_critical(&model, n);
        let phi = indicator_n(n);
        let sm = SecondMoments::new(&cal, &phi).unwrap();
        for m in [1, 2, 4] {
            for i in 1..=m {
                let exact = sm.block(m, i).unwrap();
                let oracle = two_replica_oracle(n, m, i, &cal, &phi);
                assert!(
                    (exact - oracle).abs() < 1e-12 * oracle.abs(),
                    "{model} M={m} i={i}: {exact} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn block_moment_matches_chain_enumeration() {
    // N = 8, M = 2: sum over every chain a < n1 < … < nk ≤ b explicitly
    let n = 8;
    let cal = quasi_critical(&DisorderModel::Gaussian, n);
    let phi = indicator_n(n);
    let acf = direct_acf(&phi);
    let q = return_probabilities(n);
    let qff = |t: usize| csum(acf.iter().map(|(x, v)| v * transition_prob(2 * t as u64, *x)));
    for i in 1..=2 {
        let (a, b) = ((i - 1) * 4, i * 4);
        let window: Vec<usize> = (a + 1..=b).collect();
        let mut total = Vec::new();
        for mask in 1u32..(1 << window.len()) {
            let times: Vec<usize> = (0..window.len()).filter(|k| mask >> k & 1 == 1).map(|k| window[k]).collect();
            let mut w = qff(times[0]) * cal.sigma_sq;
            for pair in times.windows(2) {
                w *= cal.sigma_sq * q[pair[1] - pair[0]];
            }
            total.push(w);
        }
        let brute = cal.theta * csum(total) / (n * n) as f64;
        let exact = exact_block_second_moment(n, 2, i, &cal, &phi).unwrap();
        assert!((exact - brute).abs() < 1e-13 * brute, "i={i}: {exact} vs {brute}");
    }
}

#[test]
fn renewal_identity_exhaustive_and_recursive() {
    let sigma_sq = 0.37;
    let t = RenewalTable::new(2000, sigma_sq).unwrap();
    let rec = t.a_by_recursion();
    for l in 0..=2000 {
        assert!((t.a[l] - rec[l]).abs() < 1e-12 * rec[l], "ℓ={l}");
    }
    // nested chains 0 < t1 < … < tk ≤ ℓ
    let q = return_probabilities(10);
    for l in 0..=10usize {
        let mut terms = vec![1.0];
        for mask in 1u32..(1 << l) {
            let times: Vec<usize> = (0..l).filter(|k| mask >> k & 1 == 1).map(|k| k + 1).collect();
            let mut w = sigma_sq * q[times[0]];
            for p in times.windows(2) {
                w *= sigma_sq * q[p[1] - p[0]];
            }
            terms.push(w);
        }
        let brute = csum(terms);
        assert!((t.a[l] - brute).abs() < 1e-14, "ℓ={l}");
    }
}

#[test]
fn renewal_laplace_sum_obeys_geometric_bound() {
    for (sigma_sq, l, lambda) in [(0.2, 64, 0.0), (0.3, 256, 0.01), (0.25, 1024, 0.001)] {
        let t = RenewalTable::new(l, sigma_sq).unwrap();
        let x = sigma_sq * laplace_overlap(l, lambda);
        assert!(x < 1.0);
        assert!(t.laplace_sum(l, lambda) <= x / (1.0 - x) * (1.0 + 1e-12));
    }
    assert_eq!(
        RenewalTable::new(RENEWAL_MAX_HORIZON + 1, 0.1).unwrap_err(),
        ChaosError::Horizon {
            t: RENEWAL_MAX_HORIZON + 1,
            max: RENEWAL_MAX_HORIZON
        }
    );
}

#[test]
fn qff_matches_direct_double_sum() {
    let phi = discretize_test_function(&TestFunction::Bump { radius: 1.0 }, 12.0, 4).unwrap();
    let supp: Vec<_> = phi.support().collect();
    let table = qff_table(&phi, 12);
    for m in 0..=24u64 {
        let direct = csum(
            supp.iter()
                .flat_map(|&(z, a)| supp.iter().map(move |&(w, b)| a * b * transition_prob(m, z - w))),
        );
        assert!((qff(m as usize, &phi) - direct).abs() < 1e-12 * direct.abs().max(1.0), "m={m}");
        if m % 2 == 0 {
            assert!((table[m as usize / 2] - direct).abs() < 1e-12 * direct.abs().max(1.0), "m={m}");
        }
    }
}

#[test]
fn qff_odd_times_use_odd_displacements() {
    // a single point: no odd-parity displacement, so every odd time vanishes
    let phi = Field::point_mass(LatticePoint::new(3, -1), 2.0);
    for m in [1, 3, 7, 11] {
        assert_eq!(qff(m, &phi), 0.0);
    }
    // two neighbouring points: odd times see the displacement ±e1 only
    let mut pair = Field::centred(1);
    pair.set(LatticePoint::ORIGIN, 1.0);
    pair.set(LatticePoint::new(1, 0), 1.0);
    let expect = 2.0 * transition_prob(3, LatticePoint::new(1, 0));
    assert!((qff(3, &pair) - expect).abs() < 1e-15);
}

#[test]
fn qff_uniform_bound_from_window() {
    // q^{φ,φ}_m ≤ ‖φ_N‖_∞ ‖φ_N‖_1, and ‖φ_N‖_1 ≤ |support box| ‖φ‖_∞ N
    for n in [64, 256, 1024] {
        let phi = indicator_n(n);
        let c = (phi.width * phi.height) as f64 / n as f64;
        for (m, v) in qff_table(&phi, n).into_iter().enumerate() {
            assert!(v.abs() <= c * n as f64 * (1.0 + 1e-12), "N={n} m={m}");
        }
    }
}

#[test]
fn zero_beta_gives_zero_moments() {
    let n = 64;
    let cal = calibrate(&DisorderModel::Gaussian, n, (n as f64).ln(), Regime::QuasiCritical).unwrap();
    assert_eq!(cal.beta, 0.0);
    let phi = indicator_n(n);
    assert_eq!(exact_block_second_moment(n, 1, 1, &cal, &phi).unwrap(), 0.0);
    assert_eq!(geometric_upper_bound(n, 4, 2, &cal, &phi).unwrap(), 0.0);
}

#[test]
fn bound_dominates_and_defect_is_consistent() {
    for n in [64, 256, 1024] {
        let cal = quasi_critical(&DisorderModel::Gaussian, n);
        let sm = SecondMoments::new(&cal, &indicator_n(n)).unwrap();
        assert_eq!(sm.defect(1).unwrap(), 0.0);
        for m in [1, 2, 4, 8] {
            for i in 1..=m {
                assert!(sm.block(m, i).unwrap() <= sm.geometric_bound(m, i).unwrap() + 1e-12);
            }
            let d = sm.defect(m).unwrap();
            assert!(d >= -1e-12);
            assert!((d - sm.defect_direct(m).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn critical_window_is_rejected_by_the_bound() {
    let n = 256;
    let cal = calibrate(&DisorderModel::Gaussian, n, 1.0, Regime::CriticalWindow).unwrap();
    let phi = indicator_n(n);
    assert!(matches!(
        geometric_upper_bound(n, 1, 1, &cal, &phi),
        Err(ChaosError::NotSubcritical(_))
    ));
    assert!(exact_block_second_moment(n, 1, 1, &cal, &phi).unwrap() > 0.0);
    assert_eq!(
        exact_block_second_moment(n, 3, 1, &cal, &phi).unwrap_err(),
        ChaosError::NotDivisible { n, m: 3 }
    );
}

#[test]
fn geometric_bound_reference_value() {
    // N = 1024, M = 4, i = 2, Gaussian law, φ = 1_{[−1,1]²}; the window sum
    // is re-evaluated here from the direct autocorrelation
    let n = 1024;
    let cal = quasi_critical(&DisorderModel::Gaussian, n);
    let phi = indicator_n(n);
    let acf = direct_acf(&phi);
    let window = csum((257..=512u64).map(|t| csum(acf.iter().map(|(x, v)| v * transition_prob(2 * t, *x)))));
    let direct = cal.theta * window / (n * n) as f64 * cal.sigma_sq / cal.gap();
    let bound = geometric_upper_bound(n, 4, 2, &cal, &phi).unwrap();
    assert!((bound - direct).abs() < 1e-12 * direct);
    assert!((bound - 1.0844735133769758).abs() < 1e-12, "{bound}");
}

#[test]
fn kernel_closed_form_matches_quadrature() {
    let k1 = limit_kernel_k([0.0, 0.0], [1.0, 0.0]).unwrap();
    let quad = partial_kernel_quadrature(1.0, 0.0, 1.0);
    assert!((k1 - quad).abs() < 1e-8);
    for (d2, a, b) in [(0.01, 0.0, 0.3), (0.5, 0.25, 0.75), (2.0, 0.1, 1.0), (9.0, 0.5, 0.6)] {
        let q = partial_kernel_quadrature(d2, a, b);
        assert!((partial_kernel(d2, a, b) - q).abs() < 1e-10 * q.max(1e-300), "d²={d2}");
    }
    let mut last = f64::INFINITY;
    for d in [0.1, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let k = limit_kernel_k([0.0, 0.0], [d, 0.0]).unwrap();
        assert!(k < last && k > 0.0);
        last = k;
    }
    assert_eq!(limit_kernel_k([0.3, 0.3], [0.3, 0.3]), Err(ChaosError::DiagonalDivergence));
}

/// v_φ for the indicator of [−1,1]² reduces to π ∫_0^1 J(u)² du, with J the
/// Gaussian overlap of two unit intervals in one dimension.
fn indicator_limit_variance_oracle() -> f64 {
    use statrs::function::erf::erf;
    let j = |u: f64| {
        let s = u.sqrt();
        2.0 * erf(2.0 / (s * std::f64::consts::SQRT_2))
            - 2.0 * s / (2.0 * std::f64::consts::PI).sqrt() * (1.0 - (-2.0 / u).exp())
    };
    std::f64::consts::PI * adaptive_integral(|u| j(u).powi(2), 0.0, 1.0, 1e-14)
}

#[test]
fn indicator_limit_variance_reference() {
    let oracle = indicator_limit_variance_oracle();
    let v = limit_variance(&TestFunction::square(1.0), 0.0, 1.0, LIMIT_QUADRATURE_ORDER).unwrap();
    assert!((v - oracle).abs() < 1e-10 * oracle, "{v} vs {oracle}");
    assert!((v - 6.91117306697008).abs() < 1e-12, "{v}");
    // stable across quadrature orders
    let v6 = limit_variance(&TestFunction::square(1.0), 0.0, 1.0, 6).unwrap();
    assert!((v6 - v).abs() < 1e-6);
}

#[test]
fn limit_variance_is_additive_and_positive() {
    for phi in [TestFunction::square(1.0), TestFunction::Bump { radius: 1.0 }] {
        let total = limit_variance(&phi, 0.0, 1.0, LIMIT_QUADRATURE_ORDER).unwrap();
        assert!(total > 0.0);
        for m in [2, 4, 8] {
            let parts = csum((1..=m).map(|i| {
                limit_variance(&phi, (i - 1) as f64 / m as f64, i as f64 / m as f64, LIMIT_QUADRATURE_ORDER).unwrap()
            }));
            assert!((parts - total).abs() < 1e-10, "{phi} M={m}");
        }
    }
    assert!(limit_variance(&TestFunction::square(1.0), 0.5, 0.5, 8).is_err());
}

#[test]
fn riemann_gap_shrinks_for_smooth_phi() {
    let phi = TestFunction::Bump { radius: 1.0 };
    let gaps: Vec<f64> = [256, 1024, 4096]
        .iter()
        .map(|&n| riemann_check(n, 0.25, 0.75, &phi).unwrap().gap)
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    let r = riemann_check(4096, 0.25, 0.75, &phi).unwrap();
    assert!(r.gap < 0.05 * r.continuum);
    let empty = riemann_check(256, 0.4, 0.4, &phi).unwrap();
    assert_eq!((empty.lattice, empty.continuum, empty.gap), (0.0, 0.0, 0.0));
}

#[test]
fn small_times_are_negligible() {
    let n = 1024;
    let phi = indicator_n(n);
    let mut last = 0.0;
    for eps in [0.001, 0.01, 0.05, 0.1] {
        let (sum, bound) = small_time_contribution(n, eps, &phi);
        assert!(sum <= bound * (1.0 + 1e-12), "ε={eps}");
        assert!(sum >= last);
        last = sum;
    }
}

#[test]
fn renewal_time_sampler_matches_exact_mean() {
    let t = RenewalTime::new(1024);
    let k = 200_000u64;
    let xs: Vec<f64> = (0..k).map(|j| t.sample(5, j) as f64).collect();
    let mean = csum(xs.iter().copied()) / k as f64;
    let var = csum(xs.iter().map(|x| (x - mean).powi(2))) / (k - 1) as f64;
    let se = (var / k as f64).sqrt();
    assert!((mean - t.mean()).abs() < 3.0 * se, "{mean} vs {}", t.mean());
    assert_eq!(t.quantile(1e-300), 1);
    assert_eq!(t.quantile(1.0), 1024);
}

#[test]
fn renewal_tail_vanishes_along_n() {
    // the bound decays like 1/θ_N only once log N / πR_N is close to 1; it
    // peaks near N = 2^15
    let tails: Vec<f64> = [1 << 16, 1 << 18, 1 << 20, 1 << 22]
        .iter()
        .map(|&n| {
            let cal = quasi_critical(&DisorderModel::Gaussian, n);
            t_renewal_tail(n, 4, 0.1, usize::MAX, &cal).unwrap()
        })
        .collect();
    assert!(tails.windows(2).all(|w| w[1] < w[0]), "{tails:?}");
    let cal = quasi_critical(&DisorderModel::Gaussian, 256);
    assert_eq!(t_renewal_tail(256, 4, 0.1, 0, &cal).unwrap(), 0.0);
}

#[test]
fn variance_csv_layout() {
    let rows = [VarianceRow {
        n: 64,
        m: 4,
        i: 2,
        exact: 0.5,
        bound: 0.75,
        mc_estimate: Some(0.49),
        mc_stderr: None,
    }];
    let mut buf = Vec::new();
    write_variance_csv(&rows, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "N,M,i,exact,bound,mc_estimate,mc_stderr\n64,4,2,5e-1,7.5e-1,4.9e-1,\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qff_is_quadratic_in_phi(c in -3.0f64..3.0, m in 0usize..40) {
        let phi = discretize_test_function(&TestFunction::Bump { radius: 1.0 }, 16.0, 4).unwrap();
        let mut scaled = phi.clone();
        scaled.values.iter_mut().for_each(|v| *v *= c);
        let a = qff(m, &scaled);
        let b = c * c * qff(m, &phi);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }

    #[test]
    fn limit_variance_split_is_additive(a in 0.01f64..0.99) {
        let phi = TestFunction::square(0.5);
        let total = limit_variance(&phi, 0.0, 1.0, 8).unwrap();
        let split = limit_variance(&phi, 0.0, a, 8).unwrap() + limit_variance(&phi, a, 1.0, 8).unwrap();
        prop_assert!((total - split).abs() < 1e-10);
    }
}
