//! Exact second moments from the polynomial chaos expansion: the renewal
//! table, q^{φ,φ}, block variances of X_N with their geometric upper bound,
//! the continuum limiting variance v_φ and the Riemann-sum comparison.

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::disorder::{mix64, unit_open, Calibration};
use crate::field::{Field, LatticePoint};
use crate::lattice_rw::{return_probabilities, transition_prob};
use crate::numerics::{adaptive_integral, csum, exp_int_e1, graded_breaks, CompensatedSum, PanelRule};
use crate::polymer_sim::{discretize_test_function, SimError, TestFunction, CELL_QUADRATURE_ORDER};

/// Largest horizon of an exact renewal table.
pub const RENEWAL_MAX_HORIZON: usize = 16384;

#[derive(Debug, Error, PartialEq)]
pub enum ChaosError {
    #[error("horizon {t} exceeds the exact-run ceiling {max}")]
    Horizon { t: usize, max: usize },
    #[error("σ²R_N = {0} is not below 1")]
    NotSubcritical(f64),
    #[error("K(x, x') diverges on the diagonal x = x'")]
    DiagonalDivergence,
    #[error("N = {n} is not divisible by M = {m}")]
    NotDivisible { n: usize, m: usize },
    #[error("block index i = {i} outside 1..={m}")]
    BlockIndex { i: usize, m: usize },
    #[error("time interval ({a}, {b}] is not inside [0, 1]")]
    Interval { a: f64, b: f64 },
    #[error("calibration is for N = {cal}, requested N = {n}")]
    CalibrationSize { cal: usize, n: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

// ---------------------------------------------------------------------------
// Renewal table

/// A(ℓ) = 1 + Σ_{j=1}^{ℓ} σ² q_{2j}(0) A(ℓ−j) and the aggregate kernel
/// U_m = σ² q_{2m}(0) + Σ_{j=1}^{m−1} σ² q_{2j}(0) U_{m−j}.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalTable {
    pub horizon: usize,
    pub sigma_sq: f64,
    pub a: Vec<f64>,
    /// U_0 = 0 for indexing convenience.
    pub u: Vec<f64>,
}

impl RenewalTable {
    pub fn new(horizon: usize, sigma_sq: f64) -> Result<Self, ChaosError> {
        if horizon > RENEWAL_MAX_HORIZON {
            return Err(ChaosError::Horizon {
                t: horizon,
                max: RENEWAL_MAX_HORIZON,
            });
        }
        let q = return_probabilities(horizon);
        let mut u = vec![0.0; horizon + 1];
        for m in 1..=horizon {
            let conv = csum((1..m).map(|j| q[j] * u[m - j]));
            u[m] = sigma_sq * (q[m] + conv);
        }
        let mut a = Vec::with_capacity(horizon + 1);
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        a.push(1.0);
        for &um in &u[1..] {
            acc.add(um);
            a.push(acc.value());
        }
        Ok(Self {
            horizon,
            sigma_sq,
            a,
            u,
        })
    }

    /// A(ℓ) from its defining recursion, independent of the U table.
    pub fn a_by_recursion(&self) -> Vec<f64> {
        let q = return_probabilities(self.horizon);
        let mut a = vec![1.0; self.horizon + 1];
        for l in 1..=self.horizon {
            a[l] = 1.0 + self.sigma_sq * csum((1..=l).map(|j| q[j] * a[l - j]));
        }
        a
    }

    /// Σ_{m=1}^{L} e^{−λm} U_m.
    pub fn laplace_sum(&self, l: usize, lambda: f64) -> f64 {
        csum((1..=l.min(self.horizon)).map(|m| (-lambda * m as f64).exp() * self.u[m]))
    }
}

// ---------------------------------------------------------------------------
// q^{φ,φ}

/// acf(x) = Σ_z φ(z) φ(z + x), computed by FFT on a zero-padded grid.
pub fn autocorrelation(phi: &Field) -> Field {
    let (w, h) = (phi.width, phi.height);
    let (fw, fh) = ((2 * w - 1).next_power_of_two(), (2 * h - 1).next_power_of_two());
    let mut grid = vec![Complex64::new(0.0, 0.0); fw * fh];
    for j in 0..h {
        for i in 0..w {
            grid[j * fw + i].re = phi.values[j * w + i];
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft2 = |grid: &mut Vec<Complex64>, planner: &mut FftPlanner<f64>, inverse: bool| {
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(fw), planner.plan_fft_inverse(fh))
        } else {
            (planner.plan_fft_forward(fw), planner.plan_fft_forward(fh))
        };
        for r in grid.chunks_mut(fw) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); fh];
        for i in 0..fw {
            for j in 0..fh {
                column[j] = grid[j * fw + i];
            }
            col.process(&mut column);
            for j in 0..fh {
                grid[j * fw + i] = column[j];
            }
        }
    };
    fft2(&mut grid, &mut planner, false);
    for c in grid.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    fft2(&mut grid, &mut planner, true);
    let scale = 1.0 / (fw * fh) as f64;
    let (aw, ah) = (2 * w - 1, 2 * h - 1);
    let mut acf = Field::zeros(LatticePoint::new(-(w as i64 - 1), -(h as i64 - 1)), aw, ah);
    for j in 0..ah {
        for i in 0..aw {
            let x = acf.point(j * aw + i);
            let gi = x.x1.rem_euclid(fw as i64) as usize;
            let gj = x.x2.rem_euclid(fh as i64) as usize;
            acf.values[j * aw + i] = grid[gj * fw + gi].re * scale;
        }
    }
    acf
}

/// q_m^{φ,φ} = Σ_{z,z'} q_m(z − z') φ(z) φ(z') = Σ_x acf_φ(x) q_m(x).
pub fn qff(m: usize, phi_n: &Field) -> f64 {
    let acf = autocorrelation(phi_n);
    csum(acf.iter().map(|(x, v)| v * transition_prob(m as u64, x)))
}

/// q^{φ,φ}_{2n} for n = 0..=n_max.
///
/// With u = x1 + x2, v = x1 − x2, q_{2n}(x) = P_{2n}(u) P_{2n}(v) where P_m is
/// the law of a ±1 walk; each row P_{2n} is built by a ratio recurrence.
pub fn qff_table(phi_n: &Field, n_max: usize) -> Vec<f64> {
    let acf = autocorrelation(phi_n);
    // even-parity points as (|u|/2, |v|/2, value)
    let mut pts: Vec<(usize, usize, f64)> = acf
        .iter()
        .filter(|(x, v)| *v != 0.0 && (x.x1 + x.x2).rem_euclid(2) == 0)
        .map(|(x, v)| (((x.x1 + x.x2).abs() / 2) as usize, ((x.x1 - x.x2).abs() / 2) as usize, v))
        .collect();
    pts.sort_by_key(|p| (p.0, p.1));
    let umax = pts.iter().map(|p| p.0.max(p.1)).max().unwrap_or(0);
    (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let row = even_row(2 * n, umax);
            let mut acc = CompensatedSum::new();
            for &(a, b, v) in &pts {
                acc.add(v * row[a] * row[b]);
            }
            acc.value()
        })
        .collect()
}

/// P_m(2k) for k = 0..=kmax, m even.
fn even_row(m: usize, kmax: usize) -> Vec<f64> {
    let mut row = vec![0.0; kmax + 1];
    let half = m / 2;
    // P_m(0) = C(m, m/2) 2^{-m}
    let mut p0 = 1.0f64;
    for j in 1..=half {
        p0 *= (2 * j - 1) as f64 / (2 * j) as f64;
    }
    row[0] = p0;
    for k in 0..kmax.min(half) {
        // P(u + 2)/P(u) = (m − u)/(m + u + 2)
        let u = 2 * k;
        row[k + 1] = row[k] * (m - u) as f64 / (m + u + 2) as f64;
    }
    row
}

// ---------------------------------------------------------------------------
// Block second moments

/// Exact second moments of X_N and its time blocks for one calibration and
/// test function.
#[derive(Debug, Clone, Serialize)]
pub struct SecondMoments {
    pub n: usize,
    pub theta: f64,
    pub sigma_sq: f64,
    pub r_n: f64,
    /// q^{φ,φ}_{2n} for n = 0..=N.
    pub qff: Vec<f64>,
    #[serde(skip)]
    pub renewal: RenewalTable,
}

impl SecondMoments {
    pub fn new(cal: &Calibration, phi_n: &Field) -> Result<Self, ChaosError> {
        let renewal = RenewalTable::new(cal.n, cal.sigma_sq)?;
        Ok(Self {
            n: cal.n,
            theta: cal.theta,
            sigma_sq: cal.sigma_sq,
            r_n: cal.r_n,
            qff: qff_table(phi_n, cal.n),
            renewal,
        })
    }

    /// σ²R_N < 1.
    pub fn is_subcritical(&self) -> bool {
        self.sigma_sq * self.r_n < 1.0
    }

    fn window(&self, m: usize, i: usize) -> Result<(usize, usize), ChaosError> {
        if m == 0 || !self.n.is_multiple_of(m) {
            return Err(ChaosError::NotDivisible { n: self.n, m });
        }
        if i == 0 || i > m {
            return Err(ChaosError::BlockIndex { i, m });
        }
        let l = self.n / m;
        Ok(((i - 1) * l, i * l))
    }

    /// E[(X^{(i)}_{N,M})²] = θσ² Σ_{a<n≤b} q^{φ,φ}_{2n}/N² · A(b − n).
    pub fn block(&self, m: usize, i: usize) -> Result<f64, ChaosError> {
        let (a, b) = self.window(m, i)?;
        let n2 = (self.n as f64).powi(2);
        let s = csum((a + 1..=b).map(|t| self.qff[t] / n2 * self.renewal.a[b - t]));
        Ok(self.theta * self.sigma_sq * s)
    }

    /// E[X_N²].
    pub fn full(&self) -> f64 {
        self.block(1, 1).expect("M = 1 always divides N")
    }

    /// θ · Σ_{a<n≤b} q^{φ,φ}_{2n}/N² · σ²/(1 − σ²R_N).
    pub fn geometric_bound(&self, m: usize, i: usize) -> Result<f64, ChaosError> {
        let x = self.sigma_sq * self.r_n;
        if x >= 1.0 {
            return Err(ChaosError::NotSubcritical(x));
        }
        let (a, b) = self.window(m, i)?;
        let n2 = (self.n as f64).powi(2);
        let s = csum((a + 1..=b).map(|t| self.qff[t] / n2));
        Ok(self.theta * s * self.sigma_sq / (1.0 - x))
    }

    /// E[X_N²] − Σ_i E[(X^{(i)}_{N,M})²] = ‖X_N − Σ_i X^{(i)}‖²_{L²}.
    pub fn defect(&self, m: usize) -> Result<f64, ChaosError> {
        let blocks = (1..=m).map(|i| self.block(m, i)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.full() - csum(blocks))
    }

    /// ‖X_N − Σ_i X^{(i)}_{N,M}‖² summed directly over the chaos terms whose
    /// time points leave the block of the first one.
    pub fn defect_direct(&self, m: usize) -> Result<f64, ChaosError> {
        self.window(m, 1)?;
        let l = self.n / m;
        let n2 = (self.n as f64).powi(2);
        let a = &self.renewal.a;
        let s = csum((1..=self.n).map(|t| {
            let end = t.div_ceil(l) * l;
            self.qff[t] / n2 * (a[self.n - t] - a[end - t])
        }));
        Ok(self.theta * self.sigma_sq * s)
    }
}

fn check_n(n: usize, cal: &Calibration) -> Result<(), ChaosError> {
    if n != cal.n {
        return Err(ChaosError::CalibrationSize { cal: cal.n, n });
    }
    Ok(())
}

/// E[(X^{(i)}_{N,M})²]; M = i = 1 gives E[X_N²].
pub fn exact_block_second_moment(
    n: usize,
    m: usize,
    i: usize,
    cal: &Calibration,
    phi_n: &Field,
) -> Result<f64, ChaosError> {
    check_n(n, cal)?;
    SecondMoments::new(cal, phi_n)?.block(m, i)
}

/// ‖X_N − Σ_i X^{(i)}_{N,M}‖²_{L²}.
pub fn decomposition_defect(n: usize, m: usize, cal: &Calibration, phi_n: &Field) -> Result<f64, ChaosError> {
    check_n(n, cal)?;
    SecondMoments::new(cal, phi_n)?.defect(m)
}

/// Upper bound on E[(X^{(i)}_{N,M})²] from summing the renewal geometrically.
pub fn geometric_upper_bound(
    n: usize,
    m: usize,
    i: usize,
    cal: &Calibration,
    phi_n: &Field,
) -> Result<f64, ChaosError> {
    check_n(n, cal)?;
    SecondMoments::new(cal, phi_n)?.geometric_bound(m, i)
}

// ---------------------------------------------------------------------------
// Continuum limit

/// ∫_a^b (1/2u) e^{−d²/2u} du = ½(E₁(d²/2b) − E₁(d²/2a)) for d > 0.
pub fn partial_kernel(d2: f64, a: f64, b: f64) -> f64 {
    let upper = exp_int_e1(d2 / (2.0 * b));
    let lower = if a > 0.0 { exp_int_e1(d2 / (2.0 * a)) } else { 0.0 };
    0.5 * (upper - lower)
}

/// K(x, x') = ∫_0^1 (1/2u) e^{−|x−x'|²/2u} du = ½E₁(|x−x'|²/2).
pub fn limit_kernel_k(x: [f64; 2], y: [f64; 2]) -> Result<f64, ChaosError> {
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    if d2 == 0.0 {
        return Err(ChaosError::DiagonalDivergence);
    }
    Ok(partial_kernel(d2, 0.0, 1.0))
}

/// The u-integral of the kernel by adaptive quadrature, for validation.
pub fn partial_kernel_quadrature(d2: f64, a: f64, b: f64) -> f64 {
    adaptive_integral(|u: f64| (-d2 / (2.0 * u)).exp() / (2.0 * u), a, b, 1e-14)
}

/// Default Gauss-Legendre order of [`limit_variance`].
pub const LIMIT_QUADRATURE_ORDER: usize = 10;

/// Φ(d) = ∫ φ(x) φ(x + d) dx by tensor quadrature split at the kinks of both
/// factors.
fn phi_overlap(phi: &TestFunction, d: [f64; 2], rule: &PanelRule) -> f64 {
    let (lo, hi) = phi.support();
    let kinks = phi.breaks();
    let axis = |k: usize| -> Vec<(f64, f64)> {
        let a = lo[k].max(lo[k] - d[k]);
        let b = hi[k].min(hi[k] - d[k]);
        if b <= a {
            return Vec::new();
        }
        let mut cuts = vec![a, b];
        for &c in &kinks[k] {
            for v in [c, c - d[k]] {
                if v > a && v < b {
                    cuts.push(v);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        rule.on_panels(&cuts)
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut acc = CompensatedSum::new();
    for &(y, wy) in &ys {
        for &(x, wx) in &xs {
            acc.add(wx * wy * phi.eval([x, y]) * phi.eval([x + d[0], y + d[1]]));
        }
    }
    acc.value()
}

/// Nonnegative pairwise differences of kink positions along one axis: the
/// displacements where Φ may fail to be smooth.
fn kink_offsets(b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = b
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).abs()))
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    out
}

/// v_{φ,(a,b]} = ∬ φ(x) φ(x') ∫_a^b (1/2u) e^{−|x−x'|²/2u} du dx dx'.
///
/// Written as ∫ Φ(d) k(|d|) dd with Φ the overlap of φ with its translate
/// and k the closed-form u-integral, evaluated in polar coordinates with
/// radial panels refined toward the logarithmic singularity at d = 0 and
/// angular panels split where Φ has kinks.
pub fn limit_variance(phi: &TestFunction, a: f64, b: f64, order: usize) -> Result<f64, ChaosError> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(ChaosError::Interval { a, b });
    }
    let rule = PanelRule::new(order);
    let [k1, k2] = phi.breaks();
    let (o1, o2) = (kink_offsets(&k1), kink_offsets(&k2));
    let (lo, hi) = phi.support();
    let diam = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let mut kinks: Vec<f64> = o1
        .iter()
        .flat_map(|c1| o2.iter().map(move |c2| c1.hypot(*c2)))
        .filter(|&r| r > 0.0 && r < diam)
        .chain([0.0, diam])
        .collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    // the angular window opens like √(r − r_k) past a kink radius, so panels
    // are graded geometrically toward every kink from both sides
    let mut rbreaks = graded_breaks(kinks[1], 40);
    for w in kinks.windows(3).chain(std::iter::once(&kinks[kinks.len() - 2..])) {
        let (r, hi) = (w[1], w.get(2).copied());
        let below = r - w[0];
        rbreaks.extend((0..=30).map(|j| r - below * 0.5f64.powi(j)));
        if let Some(hi) = hi {
            rbreaks.extend((0..=30).map(|j| r + (hi - r) * 0.5f64.powi(j)));
        }
    }
    rbreaks.sort_by(f64::total_cmp);
    rbreaks.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let radial = rule.on_panels(&rbreaks);
    let pi = std::f64::consts::PI;
    let terms: Vec<f64> = radial
        .par_iter()
        .map(|&(r, wr)| {
            let mut tb = vec![0.0, 0.5 * pi, pi];
            for &c in o1.iter().filter(|&&c| c > 0.0 && c < r) {
                let t = (c / r).acos();
                tb.extend([t, pi - t]);
            }
            for &c in o2.iter().filter(|&&c| c > 0.0 && c < r) {
                let t = (c / r).asin();
                tb.extend([t, pi - t]);
            }
            tb.sort_by(f64::total_cmp);
            // Φ(−d) = Φ(d): integrate over [0, π) and double
            let theta = 2.0 * csum(
                rule.on_panels(&tb)
                    .into_iter()
                    .map(|(t, wt)| wt * phi_overlap(phi, [r * t.cos(), r * t.sin()], &rule)),
            );
            wr * r * partial_kernel(r * r, a, b) * theta
        })
        .collect();
    Ok(csum(terms))
}

/// Lattice and continuum sides of the Riemann-sum approximation.
#[derive(Debug, Clone, Serialize)]
pub struct RiemannCheck {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    /// Σ_{aN<n≤bN} q^{φ,φ}_{2n}/N².
    pub lattice: f64,
    /// ∬ φφ ∫_a^b (1/u) g((x−x')/√u) du = v_{φ,(a,b]}/π.
    pub continuum: f64,
    pub gap: f64,
}

pub fn riemann_check(n: usize, a: f64, b: f64, phi: &TestFunction) -> Result<RiemannCheck, ChaosError> {
    if !(0.0 <= a && a <= b && b <= 1.0) {
        return Err(ChaosError::Interval { a, b });
    }
    let (lattice, continuum) = if a == b {
        (0.0, 0.0)
    } else {
        let phi_n = discretize_test_function(phi, n as f64, CELL_QUADRATURE_ORDER)?;
        let table = qff_table(&phi_n, (b * n as f64).floor() as usize);
        let n2 = (n as f64).powi(2);
        let lo = (a * n as f64).floor() as usize;
        let lattice = csum(table[lo + 1..].iter().map(|v| v / n2));
        let v = limit_variance(phi, a, b, LIMIT_QUADRATURE_ORDER)?;
        (lattice, v / std::f64::consts::PI)
    };
    Ok(RiemannCheck {
        n,
        a,
        b,
        lattice,
        continuum,
        gap: (lattice - continuum).abs(),
    })
}

/// Contribution of n ≤ εN to the Riemann sum and the bound C‖φ‖²_∞ε with C
/// computed from the actual support: q^{φ,φ}_m ≤ ‖φ_N‖_∞ Σ_z φ_N(z) for every m.
pub fn small_time_contribution(n: usize, eps: f64, phi_n: &Field) -> (f64, f64) {
    let k = (eps * n as f64).floor() as usize;
    let table = qff_table(phi_n, k);
    let n2 = (n as f64).powi(2);
    let sum = csum(table[1..].iter().map(|v| v / n2));
    let bound = phi_n.sup_norm() * phi_n.values.iter().map(|v| v.abs()).sum::<f64>() * k as f64 / n2;
    (sum, bound)
}

// ---------------------------------------------------------------------------
// Renewal times

/// Law of T^{(N)}: P(T = n) = q_{2n}(0)/R_N on {1..N}.
#[derive(Debug, Clone)]
pub struct RenewalTime {
    pub n: usize,
    pub r_n: f64,
    cdf: Vec<f64>,
}

impl RenewalTime {
    pub fn new(n: usize) -> Self {
        let q = return_probabilities(n);
        let mut acc = CompensatedSum::new();
        let mut cdf = Vec::with_capacity(n);
        for &v in &q[1..] {
            acc.add(v);
            cdf.push(acc.value());
        }
        let r_n = acc.value();
        cdf.iter_mut().for_each(|c| *c /= r_n);
        Self { n, r_n, cdf }
    }

    /// E[T] = (1/R_N) Σ_{n≤N} n q_{2n}(0).
    pub fn mean(&self) -> f64 {
        let q = return_probabilities(self.n);
        csum((1..=self.n).map(|k| k as f64 * q[k])) / self.r_n
    }

    /// Inverse-CDF sample from a uniform in (0, 1).
    pub fn quantile(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c < u).min(self.n - 1) + 1
    }

    /// Sample number k of the stream `seed`.
    pub fn sample(&self, seed: u64, k: u64) -> usize {
        self.quantile(unit_open(mix64(mix64(seed) ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
    }
}

/// θσ² Σ_{ℓ=1}^{ℓ_max} (σ²R_N)^ℓ · ℓ E[T]/(εN/M): the Markov-inequality bound
/// on the tail term discarded by the lower bound.
pub fn t_renewal_tail(n: usize, m: usize, eps: f64, ell_max: usize, cal: &Calibration) -> Result<f64, ChaosError> {
    check_n(n, cal)?;
    let x = cal.sigma_sq * cal.r_n;
    if x >= 1.0 {
        return Err(ChaosError::NotSubcritical(x));
    }
    let mean = RenewalTime::new(n).mean();
    let denom = eps * n as f64 / m as f64;
    // Σ_{ℓ=1}^{L} ℓ x^ℓ = x (1 − (L+1) x^L + L x^{L+1}) / (1 − x)²
    let l = ell_max as f64;
    let series = x * (1.0 - (l + 1.0) * x.powf(l) + l * x.powf(l + 1.0)) / (1.0 - x).powi(2);
    Ok(cal.theta * cal.sigma_sq * series * mean / denom)
}

/// One CSV row of the variance-convergence output.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceRow {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    pub exact: f64,
    pub bound: f64,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
}

pub fn write_variance_csv<W: std::io::Write>(rows: &[VarianceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "N,M,i,exact,bound,mc_estimate,mc_stderr")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{},{}",
            r.n,
            r.m,
            r.i,
            r.exact,
            r.bound,
            opt(r.mc_estimate),
            opt(r.mc_stderr)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_row_matches_binomial() {
        let row = even_row(10, 6);
        for k in 0..=6 {
            let exact = crate::lattice_rw::half_binomial(10, 2 * k as i64);
            assert!((row[k] - exact).abs() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn autocorrelation_of_small_field() {
        let mut f = Field::centred(1);
        f.set(LatticePoint::new(0, 0), 2.0);
        f.set(LatticePoint::new(1, 0), 3.0);
        let acf = autocorrelation(&f);
        assert!((acf.get(LatticePoint::new(0, 0)) - 13.0).abs() < 1e-12);
        assert!((acf.get(LatticePoint::new(1, 0)) - 6.0).abs() < 1e-12);
        assert!((acf.get(LatticePoint::new(-1, 0)) - 6.0).abs() < 1e-12);
        assert!(acf.get(LatticePoint::new(0, 1)).abs() < 1e-12);
    }

    #[test]
    fn qff_of_point_mass_is_return_probability() {
        let f = Field::point_mass(LatticePoint::ORIGIN, 1.0);
        let t = qff_table(&f, 5);
        let q = return_probabilities(5);
        for n in 0..=5 {
            assert!((t[n] - q[n]).abs() < 1e-15);
        }
    }
}
