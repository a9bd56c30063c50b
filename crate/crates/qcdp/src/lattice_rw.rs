//! Exact simple-random-walk kernels on ℤ², overlap sums, and numerical checks
//! of the random-walk inequalities used by the moment bounds.
//!
//! Transition probabilities use the rotation u = x1 + x2, v = x1 - x2, under
//! which the two coordinates of the walk are independent one-dimensional
//! ±1 walks: q_n(x) = P(U_n = u) P(V_n = v).

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::field::{Field, LatticePoint};
use crate::numerics::{csum, ln_binomial};

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("dimension {0} outside 1..=4")]
    Dimension(usize),
    #[error("number of copies {0} outside 1..=2")]
    Copies(usize),
    #[error("field point has {got} coordinates, expected {expected}")]
    PointArity { got: usize, expected: usize },
    #[error("kernel cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// P(U_n = u) for the one-dimensional ±1 walk.
pub fn half_binomial(n: u64, u: i64) -> f64 {
    let ua = u.unsigned_abs();
    if ua > n || (n + ua) % 2 == 1 {
        return 0.0;
    }
    let k = (n + ua) / 2;
    if n <= 30 {
        exact_binomial(n, k) as f64 / (1u64 << n) as f64
    } else if n <= RATIO_WALK_MAX {
        let mut p = central_half_binomial(n);
        for j in n.div_ceil(2)..k {
            p *= (n - j) as f64 / (j + 1) as f64;
        }
        p
    } else {
        (ln_binomial(n, k) - n as f64 * std::f64::consts::LN_2).exp()
    }
}

/// Above this horizon single values fall back to log-gamma binomials.
const RATIO_WALK_MAX: u64 = 1 << 16;

fn exact_binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// P(U_n = n mod 2), built from factors close to one so nothing underflows.
fn central_half_binomial(n: u64) -> f64 {
    let m = n / 2;
    let mut c = 1.0;
    for i in 1..=m {
        c *= (2 * i - 1) as f64 / (2 * i) as f64;
    }
    if n % 2 == 1 {
        c *= n as f64 / (2 * (m + 1)) as f64;
    }
    c
}

/// Row of P(U_n = u) for u = -n..=n, stored at index u + n.
pub fn half_binomial_row(n: u64) -> Vec<f64> {
    if n <= 30 {
        return (-(n as i64)..=n as i64).map(|u| half_binomial(n, u)).collect();
    }
    // walk outwards from the centre with the ratio (n − k)/(k + 1)
    let mut row = vec![0.0; 2 * n as usize + 1];
    let mut p = central_half_binomial(n);
    let mut k = n.div_ceil(2);
    loop {
        let u = 2 * k - n;
        row[(n + u) as usize] = p;
        row[(n - u) as usize] = p;
        if k == n {
            break;
        }
        p *= (n - k) as f64 / (k + 1) as f64;
        k += 1;
    }
    row
}

/// q_n(x) = P(S_n = x | S_0 = 0) for the simple random walk on ℤ².
pub fn transition_prob(n: u64, x: LatticePoint) -> f64 {
    if x.l1() as u64 > n || x.parity(n) == 1 {
        return 0.0;
    }
    half_binomial(n, x.x1 + x.x2) * half_binomial(n, x.x1 - x.x2)
}

/// One step of the averaging operator: (Pf)(x) = (1/4) Σ_{y∼x} f(y).
pub fn step(f: &Field) -> Field {
    let src = f.padded(1);
    let mut out = Field::zeros(src.offset, src.width, src.height);
    let w = src.width;
    for j in 0..src.height {
        for i in 0..w {
            let mut s = 0.0;
            if i > 0 {
                s += src.values[j * w + i - 1];
            }
            if i + 1 < w {
                s += src.values[j * w + i + 1];
            }
            if j > 0 {
                s += src.values[(j - 1) * w + i];
            }
            if j + 1 < src.height {
                s += src.values[(j + 1) * w + i];
            }
            out.values[j * w + i] = 0.25 * s;
        }
    }
    out
}

/// q_n^f(x) = Σ_z q_n(x − z) f(z) on the window of `f` enlarged by n.
pub fn averaged_kernel(n: u64, f: &Field) -> Field {
    let support: Vec<(LatticePoint, f64)> = f.support().collect();
    if support.is_empty() {
        return f.padded(n as usize);
    }
    if (support.len() as u64) < n {
        direct_convolution(n, f, &support)
    } else {
        let mut g = f.clone();
        for _ in 0..n {
            g = step(&g);
        }
        g
    }
}

fn direct_convolution(n: u64, f: &Field, support: &[(LatticePoint, f64)]) -> Field {
    let mut out = f.padded(n as usize);
    let row = half_binomial_row(n);
    let ni = n as i64;
    let p = |u: i64| -> f64 {
        if u.abs() > ni {
            0.0
        } else {
            row[(u + ni) as usize]
        }
    };
    for k in 0..out.values.len() {
        let x = out.point(k);
        let mut acc = crate::numerics::CompensatedSum::new();
        for &(z, fz) in support {
            let d = x - z;
            if d.l1() > ni || d.parity(n) == 1 {
                continue;
            }
            acc.add(fz * p(d.x1 + d.x2) * p(d.x1 - d.x2));
        }
        out.values[k] = acc.value();
    }
    out
}

/// q_{2n}(0) for n = 0..=n_max.
pub fn return_probabilities(n_max: usize) -> Vec<f64> {
    // c_n = C(2n, n) 4^{-n} = P(U_{2n} = 0), so q_{2n}(0) = c_n².
    let mut out = Vec::with_capacity(n_max + 1);
    let mut c = 1.0f64;
    out.push(1.0);
    for n in 1..=n_max {
        c *= (2 * n - 1) as f64 / (2 * n) as f64;
        out.push(c * c);
    }
    out
}

/// q_{2n}(0).
pub fn return_probability(n: u64) -> f64 {
    let c = half_binomial(2 * n, 0);
    c * c
}

/// R_N = Σ_{n=1}^N q_{2n}(0).
pub fn replica_overlap(n: usize) -> f64 {
    laplace_overlap(n, 0.0)
}

/// R_N^{(λ)} = Σ_{n=1}^N e^{-λn} q_{2n}(0).
pub fn laplace_overlap(n: usize, lambda: f64) -> f64 {
    let q = return_probabilities(n);
    csum((1..=n).map(|k| (-lambda * k as f64).exp() * q[k]))
}

/// Partial sums R_1..R_{n_max} (index 0 holds R_0 = 0).
pub fn overlap_partial_sums(n_max: usize) -> Vec<f64> {
    let q = return_probabilities(n_max);
    let mut acc = crate::numerics::CompensatedSum::new();
    let mut out = vec![0.0];
    for &v in &q[1..] {
        acc.add(v);
        out.push(acc.value());
    }
    out
}

/// Table of q_n(x) for 0 ≤ n ≤ n_max and |x1|, |x2| ≤ radius.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub n_max: usize,
    pub radius: usize,
    q: Vec<f64>,
    pub q2zero: Vec<f64>,
    pub rn: Vec<f64>,
}

impl KernelTable {
    pub fn build(n_max: usize, radius: usize) -> Self {
        let side = 2 * radius + 1;
        let mut q = vec![0.0; (n_max + 1) * side * side];
        for n in 0..=n_max {
            let row = half_binomial_row(n as u64);
            let ni = n as i64;
            let slice = &mut q[n * side * side..(n + 1) * side * side];
            for j in 0..side {
                let x2 = j as i64 - radius as i64;
                for i in 0..side {
                    let x1 = i as i64 - radius as i64;
                    let (u, v) = (x1 + x2, x1 - x2);
                    if u.abs() <= ni && v.abs() <= ni {
                        slice[j * side + i] = row[(u + ni) as usize] * row[(v + ni) as usize];
                    }
                }
            }
        }
        Self {
            n_max,
            radius,
            q,
            q2zero: return_probabilities(n_max),
            rn: overlap_partial_sums(n_max),
        }
    }

    fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// q_n(x); zero outside the stored window.
    pub fn q(&self, n: usize, x: LatticePoint) -> f64 {
        let r = self.radius as i64;
        if n > self.n_max || x.x1.abs() > r || x.x2.abs() > r {
            return 0.0;
        }
        let s = self.side();
        self.q[n * s * s + (x.x2 + r) as usize * s + (x.x1 + r) as usize]
    }

    /// Time slice n as a field on [-radius, radius]².
    pub fn slice(&self, n: usize) -> Field {
        let s = self.side();
        let mut f = Field::centred(self.radius);
        f.values.copy_from_slice(&self.q[n * s * s..(n + 1) * s * s]);
        f
    }

    fn cache_path(dir: &Path, n_max: usize, radius: usize) -> PathBuf {
        dir.join(format!("kernel_{n_max}_{radius}.bin"))
    }

    /// Load the table from `dir` if cached, otherwise build and store it.
    pub fn load_or_build(dir: &Path, n_max: usize, radius: usize) -> Result<Self, LatticeError> {
        let path = Self::cache_path(dir, n_max, radius);
        if path.exists() {
            return Self::load(&path, n_max, radius);
        }
        let t = Self::build(n_max, radius);
        fs::create_dir_all(dir)?;
        t.save(&path)?;
        Ok(t)
    }

    const MAGIC: &'static [u8; 8] = b"QCDPKRN1";

    pub fn save(&self, path: &Path) -> Result<(), LatticeError> {
        let mut buf = Vec::with_capacity(24 + 8 * self.q.len());
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&(self.n_max as u64).to_le_bytes());
        buf.extend_from_slice(&(self.radius as u64).to_le_bytes());
        for v in &self.q {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path, n_max: usize, radius: usize) -> Result<Self, LatticeError> {
        let bad = |reason: &str| LatticeError::Cache {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 24 || &buf[..8] != Self::MAGIC {
            return Err(bad("bad header"));
        }
        let word = |k: usize| u64::from_le_bytes(buf[k..k + 8].try_into().expect("8 bytes"));
        if word(8) != n_max as u64 || word(16) != radius as u64 {
            return Err(bad("key mismatch"));
        }
        let side = 2 * radius + 1;
        let len = (n_max + 1) * side * side;
        if buf.len() != 24 + 8 * len {
            return Err(bad("truncated"));
        }
        let q = buf[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            n_max,
            radius,
            q,
            q2zero: return_probabilities(n_max),
            rn: overlap_partial_sums(n_max),
        })
    }
}

/// Standard two-dimensional Gaussian density.
pub fn gauss2(y1: f64, y2: f64) -> f64 {
    (-(y1 * y1 + y2 * y2) / 2.0).exp() / (2.0 * std::f64::consts::PI)
}

/// sup over parity-allowed x of |(n/2) q_n(x)/2 − g(x/√(n/2))|.
pub fn llt_deviation(n: u64) -> f64 {
    let ni = n as i64;
    let row = half_binomial_row(n);
    let scale = (n as f64 / 2.0).sqrt();
    let mut worst: f64 = 0.0;
    for x1 in -ni..=ni {
        for x2 in -ni..=ni {
            let x = LatticePoint::new(x1, x2);
            if x.parity(n) == 1 {
                continue;
            }
            let (u, v) = (x1 + x2, x1 - x2);
            let q = if u.abs() <= ni && v.abs() <= ni {
                row[(u + ni) as usize] * row[(v + ni) as usize]
            } else {
                0.0
            };
            let lhs = (n as f64 / 2.0) * q / 2.0;
            worst = worst.max((lhs - gauss2(x1 as f64 / scale, x2 as f64 / scale)).abs());
        }
    }
    worst
}

/// One line of a bound-check report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub check: String,
    pub n: u64,
    pub x1: i64,
    pub x2: i64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl BoundRow {
    fn new(check: &str, n: u64, x: LatticePoint, t: f64, lhs: f64, rhs: f64) -> Self {
        Self {
            check: check.to_string(),
            n,
            x1: x.x1,
            x2: x.x2,
            t,
            lhs,
            rhs,
            pass: lhs <= rhs * (1.0 + 1e-12),
        }
    }
}

/// Write rows as CSV with columns (check, n, x1, x2, lhs, rhs, pass).
pub fn write_bound_csv<W: Write>(rows: &[BoundRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "check,n,x1,x2,lhs,rhs,pass")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:e},{:e},{}",
            r.check, r.n, r.x1, r.x2, r.lhs, r.rhs, r.pass
        )?;
    }
    Ok(())
}

/// Outcome of [`verify_rw_bounds`].
#[derive(Debug, Clone, Serialize)]
pub struct RwBoundReport {
    /// Smallest 𝖼 ≥ 1 for which every bound holds on the grid.
    pub fitted_c: f64,
    /// Minimal constant required by each individual bound.
    pub per_check_c: Vec<(String, f64)>,
    /// Sub-Gaussian bound with c = 1 holds for every t.
    pub subgaussian_c1: bool,
    /// Rows evaluated at the fitted constant (worst x per n for the heat kernel).
    pub rows: Vec<BoundRow>,
    /// Rows that fail at the fitted constant.
    pub violations: Vec<BoundRow>,
}

/// Smallest c ≥ 1 with `f(c) ≥ target` for f increasing in c.
fn minimal_constant<F: Fn(f64) -> f64>(f: F, target: f64) -> f64 {
    if f(1.0) >= target {
        return 1.0;
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

struct WalkSums {
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    s4_at: LatticePoint,
}

fn walk_sums(n: u64, row: &[f64], q2n0: f64, t: f64) -> WalkSums {
    let ni = n as i64;
    let (mut s1, mut s2, mut s3) = (Vec::new(), Vec::new(), Vec::new());
    let mut s4 = 0.0;
    let mut s4_at = LatticePoint::ORIGIN;
    for x1 in -ni..=ni {
        for x2 in -ni..=ni {
            let x = LatticePoint::new(x1, x2);
            if x.l1() > ni || x.parity(n) == 1 {
                continue;
            }
            let q = row[(x1 + x2 + ni) as usize] * row[(x1 - x2 + ni) as usize];
            let e1 = (t * x1 as f64).exp();
            let en = (t * x.norm()).exp();
            s1.push(e1 * q);
            s2.push(e1 * q * q / q2n0);
            s3.push(en * q);
            if en * q > s4 {
                s4 = en * q;
                s4_at = x;
            }
        }
    }
    WalkSums {
        s1: csum(s1),
        s2: csum(s2),
        s3: csum(s3),
        s4,
        s4_at,
    }
}

/// Check the weighted random-walk bounds and the heat-kernel bound on
/// n ≤ n_max and the given t grid, fitting the smallest admissible 𝖼.
pub fn verify_rw_bounds(n_max: u64, t_grid: &[f64]) -> RwBoundReport {
    let mut rows = Vec::new();
    let mut subgaussian_c1 = true;
    for &t in t_grid {
        let r = BoundRow::new(
            "subgauss_c1",
            1,
            LatticePoint::ORIGIN,
            t,
            0.5 * (1.0 + t.cosh()),
            (t * t / 2.0).exp(),
        );
        subgaussian_c1 &= r.pass;
        rows.push(r);
    }

    let mut need = [1.0f64; 5];
    let mut sums = Vec::new();
    let mut heat_worst = Vec::new();
    for n in 1..=n_max {
        let row = half_binomial_row(n);
        let q2n0 = return_probability(n);
        for &t in t_grid {
            let s = walk_sums(n, &row, q2n0, t);
            let nf = n as f64;
            if t > 0.0 {
                need[0] = need[0].max(2.0 * s.s1.ln() / (t * t * nf));
                need[1] = need[1].max(2.0 * s.s2.ln() / (t * t * nf));
            }
            need[2] = need[2].max(minimal_constant(|c| c * (2.0 * c * t * t * nf).exp(), s.s3));
            need[3] = need[3].max(minimal_constant(
                |c| c * (2.0 * c * t * t * nf).exp() / nf,
                s.s4,
            ));
            sums.push((n, t, s));
        }
        // Heat kernel: worst x for this n.
        let ni = n as i64;
        let mut worst = (1.0f64, LatticePoint::ORIGIN);
        for x1 in -ni..=ni {
            for x2 in -ni..=ni {
                let x = LatticePoint::new(x1, x2);
                if x.l1() > ni || x.parity(n) == 1 {
                    continue;
                }
                let q = row[(x1 + x2 + ni) as usize] * row[(x1 - x2 + ni) as usize];
                let r2 = x.norm_sq() as f64;
                let nf = n as f64;
                let c = minimal_constant(|c| (6.0 * c / nf) * (-r2 / (8.0 * c * nf)).exp(), q);
                if c > worst.0 {
                    worst = (c, x);
                }
            }
        }
        need[4] = need[4].max(worst.0);
        heat_worst.push((n, worst.1));
    }
    let fitted_c = need.iter().fold(1.0f64, |m, &c| m.max(c)) * (1.0 + 1e-12);
    let c = fitted_c;

    for (n, t, s) in &sums {
        let nf = *n as f64;
        let o = LatticePoint::ORIGIN;
        rows.push(BoundRow::new("exp_moment", *n, o, *t, s.s1, (c * t * t * nf / 2.0).exp()));
        rows.push(BoundRow::new("exp_overlap", *n, o, *t, s.s2, (c * t * t * nf / 2.0).exp()));
        rows.push(BoundRow::new("exp_norm", *n, o, *t, s.s3, c * (2.0 * c * t * t * nf).exp()));
        rows.push(BoundRow::new(
            "exp_norm_sup",
            *n,
            s.s4_at,
            *t,
            s.s4,
            c * (2.0 * c * t * t * nf).exp() / nf,
        ));
    }
    for (n, x) in heat_worst {
        let nf = n as f64;
        rows.push(BoundRow::new(
            "heat_kernel",
            n,
            x,
            0.0,
            transition_prob(n, x),
            (6.0 * c / nf) * (-(x.norm_sq() as f64) / (8.0 * c * nf)).exp(),
        ));
    }
    let violations = rows.iter().filter(|r| !r.pass).cloned().collect();
    let names = ["exp_moment", "exp_overlap", "exp_norm", "exp_norm_sup", "heat_kernel"];
    RwBoundReport {
        fitted_c,
        per_check_c: names.iter().map(|s| s.to_string()).zip(need).collect(),
        subgaussian_c1,
        rows,
        violations,
    }
}

/// Heat-kernel bound q_n(x) ≤ (6c/n) e^{-|x|²/(8cn)} checked at every
/// reachable x for n ≤ n_max with a given constant.
pub fn heat_kernel_violations(n_max: u64, c: f64) -> Vec<BoundRow> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        let row = half_binomial_row(n);
        let ni = n as i64;
        let nf = n as f64;
        for x1 in -ni..=ni {
            for x2 in -ni..=ni {
                let x = LatticePoint::new(x1, x2);
                if x.l1() > ni || x.parity(n) == 1 {
                    continue;
                }
                let q = row[(x1 + x2 + ni) as usize] * row[(x1 - x2 + ni) as usize];
                let rhs = (6.0 * c / nf) * (-(x.norm_sq() as f64) / (8.0 * c * nf)).exp();
                let r = BoundRow::new("heat_kernel", n, x, 0.0, q, rhs);
                if !r.pass {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// Number of points x ∈ ℤ^d with |x|² ≤ r2.
pub fn ball_count(d: usize, r2: f64) -> u64 {
    if r2 < 0.0 {
        return 0;
    }
    if d == 0 {
        return 1;
    }
    let m = r2.sqrt().floor() as i64 + 1;
    (-m..=m)
        .filter(|k| ((k * k) as f64) <= r2)
        .map(|k| ball_count(d - 1, r2 - (k * k) as f64))
        .sum()
}

/// One radius of [`ball_covering_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallRow {
    pub d: usize,
    pub r: f64,
    pub count_r: u64,
    pub count_3r: u64,
    pub ratio: f64,
    pub pass: bool,
}

/// Exact lattice counts of |B^d(0, r)| and |B^d(0, 3r)| with the covering
/// inequality |B(3r)| ≤ 5^d |B(r)|.
pub fn ball_covering_check(d: usize, r_grid: &[f64]) -> Result<Vec<BallRow>, LatticeError> {
    if !(1..=4).contains(&d) {
        return Err(LatticeError::Dimension(d));
    }
    Ok(r_grid
        .iter()
        .map(|&r| {
            let a = ball_count(d, r * r);
            let b = ball_count(d, 9.0 * r * r);
            BallRow {
                d,
                r,
                count_r: a,
                count_3r: b,
                ratio: b as f64 / a as f64,
                pass: b <= 5u64.pow(d as u32) * a,
            }
        })
        .collect())
}

/// One threshold of [`maximal_inequality_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetRow {
    pub lambda: f64,
    pub level_set_size: u64,
    pub bound: f64,
    pub pass: bool,
}

/// Counts of integer points with |x|² ≤ k in dimension d, for k = 0..=k_max.
fn cumulative_ball_counts(d: usize, k_max: usize) -> Vec<u64> {
    // shell counts r_d(j) = #{x ∈ ℤ^d : |x|² = j}, built one coordinate at a time
    let mut shell = vec![0u64; k_max + 1];
    shell[0] = 1;
    for _ in 0..d {
        let mut next = vec![0u64; k_max + 1];
        for (j, &c) in shell.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut a = 0usize;
            while j + a * a <= k_max {
                next[j + a * a] += if a == 0 { c } else { 2 * c };
                a += 1;
            }
        }
        shell = next;
    }
    let mut acc = 0;
    shell
        .into_iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect()
}

/// Check |{𝓜^F > λ}| ≤ 25^m ‖F‖₁/λ for a finitely supported F on (ℤ²)^m.
///
/// `f` lists support points (2m coordinates each) with their values. The
/// maximal function is evaluated exactly: the supremum over radii is attained
/// at distances to support points.
pub fn maximal_inequality_check(
    m: usize,
    f: &[(Vec<i64>, f64)],
    lambda_grid: &[f64],
) -> Result<Vec<LevelSetRow>, LatticeError> {
    if !(1..=2).contains(&m) {
        return Err(LatticeError::Copies(m));
    }
    let d = 2 * m;
    let mut merged: HashMap<Vec<i64>, f64> = HashMap::new();
    for (p, v) in f {
        if p.len() != d {
            return Err(LatticeError::PointArity {
                got: p.len(),
                expected: d,
            });
        }
        *merged.entry(p.clone()).or_insert(0.0) += v.abs();
    }
    let mut pts: Vec<(Vec<i64>, f64)> = merged.into_iter().filter(|(_, v)| *v > 0.0).collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0));
    let l1 = csum(pts.iter().map(|p| p.1));
    let bound_factor = 25f64.powi(m as i32);

    let mut rows = Vec::new();
    for &lambda in lambda_grid {
        let bound = bound_factor * l1 / lambda;
        if pts.is_empty() {
            rows.push(LevelSetRow {
                lambda,
                level_set_size: 0,
                bound,
                pass: true,
            });
            continue;
        }
        // radius beyond which the average is at most ‖F‖₁/|B| ≤ λ
        let need = l1 / lambda;
        let mut k_max = 1usize;
        let counts = loop {
            let c = cumulative_ball_counts(d, k_max);
            if *c.last().expect("nonempty") as f64 >= need {
                break c;
            }
            k_max *= 2;
        };
        let reach = (k_max as f64).sqrt().ceil() as i64;
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for (p, _) in &pts {
            for a in 0..d {
                lo[a] = lo[a].min(p[a] - reach);
                hi[a] = hi[a].max(p[a] + reach);
            }
        }
        let mut count = 0u64;
        let mut x = lo.clone();
        let mut dist: Vec<(u64, f64)> = Vec::with_capacity(pts.len());
        loop {
            dist.clear();
            for (p, v) in &pts {
                let r2: i64 = p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((r2 as u64, *v));
            }
            dist.sort_by_key(|a| a.0);
            let mut mass = 0.0;
            let mut best: f64 = 0.0;
            let mut k = 0;
            while k < dist.len() {
                let r2 = dist[k].0;
                while k < dist.len() && dist[k].0 == r2 {
                    mass += dist[k].1;
                    k += 1;
                }
                let vol = if (r2 as usize) <= k_max {
                    counts[r2 as usize]
                } else {
                    cumulative_ball_counts(d, r2 as usize)[r2 as usize]
                };
                best = best.max(mass / vol as f64);
            }
            if best > lambda {
                count += 1;
            }
            // odometer over the window
            let mut a = 0;
            while a < d {
                x[a] += 1;
                if x[a] <= hi[a] {
                    break;
                }
                x[a] = lo[a];
                a += 1;
            }
            if a == d {
                break;
            }
        }
        rows.push(LevelSetRow {
            lambda,
            level_set_size: count,
            bound,
            pass: count as f64 <= bound,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convolve_n(n: u64) -> Field {
        let mut f = Field::point_mass(LatticePoint::ORIGIN, 1.0);
        for _ in 0..n {
            f = step(&f);
        }
        f
    }

    #[test]
    fn spec_examples() {
        assert_eq!(transition_prob(1, LatticePoint::new(1, 0)), 0.25);
        assert_eq!(transition_prob(1, LatticePoint::new(1, 1)), 0.0);
        assert_eq!(transition_prob(2, LatticePoint::ORIGIN), 0.25);
        assert_eq!(replica_overlap(1), 0.25);
        let q4 = transition_prob(4, LatticePoint::ORIGIN);
        assert!((replica_overlap(2) - (0.25 + q4)).abs() < 1e-16);
        assert!((laplace_overlap(1, 1.0) - (-1f64).exp() / 4.0).abs() < 1e-16);
    }

    #[test]
    fn two_step_paths_enumerated() {
        // all 16 two-step paths
        let steps = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        let mut counts: HashMap<(i64, i64), u32> = HashMap::new();
        for a in steps {
            for b in steps {
                *counts.entry((a.0 + b.0, a.1 + b.1)).or_default() += 1;
            }
        }
        for (&(x1, x2), &c) in &counts {
            assert_eq!(transition_prob(2, LatticePoint::new(x1, x2)), c as f64 / 16.0);
        }
    }

    #[test]
    fn closed_form_matches_convolution() {
        for n in 0..=6u64 {
            let f = convolve_n(n);
            for (x, v) in f.iter() {
                assert!((transition_prob(n, x) - v).abs() < 1e-15, "n={n} x={x:?}");
            }
        }
    }

    #[test]
    fn log_space_branch_is_continuous() {
        // n = 31 and 32 use log-space binomials; compare with recurrence.
        for n in [31u64, 32, 40] {
            let f = convolve_n(n);
            for (x, v) in f.iter() {
                assert!((transition_prob(n, x) - v).abs() < 1e-13 * v.max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn chapman_kolmogorov_small() {
        for n in 0..=4u64 {
            for m in 0..=4u64 {
                let r = (n + m) as i64;
                for x1 in -r..=r {
                    for x2 in -r..=r {
                        let x = LatticePoint::new(x1, x2);
                        let mut s = 0.0;
                        for y1 in -(n as i64)..=n as i64 {
                            for y2 in -(n as i64)..=n as i64 {
                                let y = LatticePoint::new(y1, y2);
                                s += transition_prob(n, y) * transition_prob(m, x - y);
                            }
                        }
                        assert!((s - transition_prob(n + m, x)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn averaged_kernel_matches_double_sum() {
        let f = Field::constant_on(LatticePoint::new(-1, -1), LatticePoint::new(1, 1), 1.0);
        let g = averaged_kernel(2, &f);
        for (x, v) in g.iter() {
            let mut s = 0.0;
            for (z, fz) in f.iter() {
                s += transition_prob(2, x - z) * fz;
            }
            assert!((s - v).abs() < 1e-15);
        }
        // the two code paths agree
        let support: Vec<_> = f.support().collect();
        let d = direct_convolution(5, &f, &support);
        let mut s = f.clone();
        for _ in 0..5 {
            s = step(&s);
        }
        for (a, b) in d.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn averaged_kernel_normalisation() {
        let f = Field::constant_on(LatticePoint::new(-6, -6), LatticePoint::new(6, 6), 1.0);
        let g = averaged_kernel(3, &f);
        for x1 in -3..=3 {
            for x2 in -3..=3 {
                assert!((g.get(LatticePoint::new(x1, x2)) - 1.0).abs() < 1e-15);
            }
        }
        let z = averaged_kernel(3, &Field::centred(2));
        assert!(z.is_zero());
        let one = averaged_kernel(1, &Field::point_mass(LatticePoint::ORIGIN, 1.0));
        assert_eq!(one.get(LatticePoint::new(0, 1)), 0.25);
    }

    #[test]
    fn kernel_table_invariants() {
        let t = KernelTable::build(12, 12);
        for n in 0..=12 {
            let s = t.slice(n);
            assert!((s.sum() - 1.0).abs() < 1e-14);
            for (x, v) in s.iter() {
                assert_eq!(v, t.q(n, LatticePoint::new(-x.x1, -x.x2)));
                if x.parity(n as u64) == 1 {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(t.rn.windows(2).all(|w| w[1] >= w[0]));
        assert!((t.rn[12] - replica_overlap(12)).abs() < 1e-15);
    }

    #[test]
    fn kernel_cache_round_trip() {
        let dir = std::env::temp_dir().join(format!("qcdp-cache-{}", std::process::id()));
        let a = KernelTable::load_or_build(&dir, 6, 4).unwrap();
        let b = KernelTable::load_or_build(&dir, 6, 4).unwrap();
        assert_eq!(a, b);
        assert!(KernelTable::load(&KernelTable::cache_path(&dir, 6, 4), 7, 4).is_err());
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn overlap_grows_like_log() {
        let q = overlap_partial_sums(1 << 20);
        let band: Vec<f64> = (4..=20)
            .map(|k| q[1 << k] - (k as f64 * std::f64::consts::LN_2) / std::f64::consts::PI)
            .collect();
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 0.1, "band [{lo}, {hi}]");
    }

    #[test]
    fn llt_deviation_trend() {
        let d: Vec<f64> = [4u64, 16, 64, 256].iter().map(|&n| llt_deviation(n)).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        // oracle: maximise over the 64-fold convolution of the one-step kernel
        let f = convolve_n(64);
        let s = 32f64.sqrt();
        let oracle = f
            .iter()
            .filter(|(x, _)| x.parity(64) == 0)
            .map(|(x, v)| (16.0 * v - gauss2(x.x1 as f64 / s, x.x2 as f64 / s)).abs())
            .fold(0.0, f64::max);
        assert!((d[2] - oracle).abs() < 1e-13, "{} vs {oracle}", d[2]);
        assert!((d[2] - LLT_64).abs() < 1e-12, "{}", d[2]);
    }

    const LLT_64: f64 = 0.001_238_503_407_751_445_6;

    #[test]
    fn ball_examples() {
        let r = ball_covering_check(1, &[0.9]).unwrap();
        assert_eq!((r[0].count_r, r[0].count_3r), (1, 5));
        assert_eq!(r[0].ratio, 5.0);
        let r = ball_covering_check(2, &[1.0]).unwrap();
        assert_eq!((r[0].count_r, r[0].count_3r), (5, 29));
        let r = ball_covering_check(4, &[0.3]).unwrap();
        assert_eq!((r[0].count_r, r[0].count_3r), (1, 1));
        assert!(ball_covering_check(5, &[1.0]).is_err());
    }

    #[test]
    fn maximal_examples() {
        let zero = maximal_inequality_check(1, &[], &[0.5, 1.0]).unwrap();
        assert!(zero.iter().all(|r| r.level_set_size == 0));
        let unit = maximal_inequality_check(1, &[(vec![0, 0], 1.0)], &[1.0]).unwrap();
        // the average at the origin equals 1, so nothing exceeds λ = 1
        assert_eq!(unit[0].level_set_size, 0);
        let unit = maximal_inequality_check(1, &[(vec![0, 0], 1.0)], &[0.2]).unwrap();
        // points with 1/|B(0,|x|)| > 0.2: |B| ≤ 4 only for radius 0
        assert_eq!(unit[0].level_set_size, 1);
        assert!(unit[0].pass);
    }

    #[test]
    fn cumulative_counts_match_direct() {
        for d in 1..=4 {
            let c = cumulative_ball_counts(d, 30);
            for k in 0..=30 {
                assert_eq!(c[k], ball_count(d, k as f64));
            }
        }
    }

    #[test]
    fn rw_bounds_small() {
        let rep = verify_rw_bounds(16, &[0.0, 0.1, 0.3, 1.0]);
        assert!(rep.subgaussian_c1);
        assert!(rep.violations.is_empty());
        assert!(rep.fitted_c >= 1.0 && rep.fitted_c < 2.0, "{}", rep.fitted_c);
        assert!(heat_kernel_violations(16, rep.fitted_c).is_empty());
        let t0 = rep.rows.iter().find(|r| r.check == "exp_moment" && r.t == 0.0).unwrap();
        assert!((t0.lhs - 1.0).abs() < 1e-14 && t0.rhs == 1.0);
    }
}
