//! Partition-function fields by backward dynamic programming over time
//! slices, the discretised test functions φ_N, and Monte Carlo samples of
//! X_N and of its time blocks X^{(i)}_{N,M}.
//!
//! Disorder is never stored: each slice is regenerated from its address
//! (seed, replica, time) while sweeping, so a replica's value does not depend
//! on how replicas or rows are scheduled across workers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disorder::{row_key, slice_key, Calibration, SiteSampler};
use crate::field::{Field, LatticePoint};
use crate::lattice_rw::step;
use crate::numerics::{CompensatedSum, PanelRule};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("N = {n} is not divisible by M = {m}")]
    NotDivisible { n: usize, m: usize },
    #[error("block index i = {i} outside 1..={m}")]
    BlockIndex { i: usize, m: usize },
    #[error("empty time window ({a}, {b}]")]
    EmptyWindow { a: usize, b: usize },
    #[error("truncation box does not contain the support of the terminal field")]
    BoxTooSmall,
    #[error("scale R = {0} is below 1")]
    Scale(f64),
    #[error("malformed test function '{0}': {1}")]
    TestFunction(String, String),
    #[error("truncation parameters b = {b}, ε = {eps} are invalid")]
    Truncation { b: f64, eps: f64 },
}

// ---------------------------------------------------------------------------
// Test functions

/// A compactly supported test function on ℝ².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// Indicator of the rectangle [lo, hi].
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    /// Smooth bump exp(1 − 1/(1 − |x|²/r²)) on the disc of radius r.
    Bump { radius: f64 },
    /// Gaussian e^{−|x|²/(2 sd²)} truncated to the disc of radius r.
    Gauss { sd: f64, radius: f64 },
    /// Piecewise constant on square cells of side `h`; cell (i, j) is
    /// origin + h·[i, i+1) × h·[j, j+1) and `values` is row-major in j.
    Table { h: f64, origin: [f64; 2], nx: usize, values: Vec<f64> },
}

impl TestFunction {
    /// Indicator of [−a, a]².
    pub fn square(a: f64) -> Self {
        Self::Rectangle { lo: [-a, -a], hi: [a, a] }
    }

    pub fn eval(&self, y: [f64; 2]) -> f64 {
        match self {
            Self::Rectangle { lo, hi } => {
                let inside = (0..2).all(|k| y[k] >= lo[k] && y[k] <= hi[k]);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Bump { radius } => {
                let s = (y[0] * y[0] + y[1] * y[1]) / (radius * radius);
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
            Self::Gauss { sd, radius } => {
                let r2 = y[0] * y[0] + y[1] * y[1];
                if r2 <= radius * radius {
                    (-r2 / (2.0 * sd * sd)).exp()
                } else {
                    0.0
                }
            }
            Self::Table { h, origin, nx, values } => {
                let i = ((y[0] - origin[0]) / h).floor();
                let j = ((y[1] - origin[1]) / h).floor();
                let ny = values.len() / nx;
                if i < 0.0 || j < 0.0 || i >= *nx as f64 || j >= ny as f64 {
                    0.0
                } else {
                    values[j as usize * nx + i as usize]
                }
            }
        }
    }

    /// Closed box containing the support.
    pub fn support(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Self::Rectangle { lo, hi } => (*lo, *hi),
            Self::Bump { radius } | Self::Gauss { radius, .. } => ([-radius, -radius], [*radius, *radius]),
            Self::Table { h, origin, nx, values } => {
                let ny = values.len() / nx;
                (*origin, [origin[0] + h * *nx as f64, origin[1] + h * ny as f64])
            }
        }
    }

    /// Breakpoints along each axis where the function is not smooth; cells
    /// are split there before quadrature.
    pub(crate) fn breaks(&self) -> [Vec<f64>; 2] {
        match self {
            Self::Rectangle { lo, hi } => [vec![lo[0], hi[0]], vec![lo[1], hi[1]]],
            Self::Bump { radius } | Self::Gauss { radius, .. } => [vec![-radius, 0.0, *radius], vec![-radius, 0.0, *radius]],
            Self::Table { h, origin, nx, values } => {
                let ny = values.len() / nx;
                [
                    (0..=*nx).map(|i| origin[0] + h * i as f64).collect(),
                    (0..=ny).map(|j| origin[1] + h * j as f64).collect(),
                ]
            }
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rectangle { lo, hi } => write!(f, "rect:{},{},{},{}", lo[0], lo[1], hi[0], hi[1]),
            Self::Bump { radius } => write!(f, "bump:{radius}"),
            Self::Gauss { sd, radius } => write!(f, "gauss:{sd},{radius}"),
            Self::Table { h, origin, nx, values } => {
                let v: Vec<String> = values.iter().map(f64::to_string).collect();
                write!(f, "table:{h},{},{},{nx}:{}", origin[0], origin[1], v.join(","))
            }
        }
    }
}

impl FromStr for TestFunction {
    type Err = SimError;

    /// `indicator:a` | `rect:x0,y0,x1,y1` | `bump:r` | `gauss:sd,r` |
    /// `table:h,x0,y0,nx:v1,v2,...`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = |why: &str| SimError::TestFunction(s.to_string(), why.to_string());
        let nums = |t: &str| -> Result<Vec<f64>, SimError> {
            t.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad("expected numbers")))
                .collect()
        };
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let phi = match kind {
            "indicator" => match nums(rest)?.as_slice() {
                [a] if *a > 0.0 => Self::square(*a),
                _ => return Err(bad("expects one positive half-width")),
            },
            "rect" => match nums(rest)?.as_slice() {
                [x0, y0, x1, y1] if x1 > x0 && y1 > y0 => Self::Rectangle {
                    lo: [*x0, *y0],
                    hi: [*x1, *y1],
                },
                _ => return Err(bad("expects x0,y0,x1,y1 with x0 < x1, y0 < y1")),
            },
            "bump" => match nums(rest)?.as_slice() {
                [r] if *r > 0.0 => Self::Bump { radius: *r },
                _ => return Err(bad("expects one positive radius")),
            },
            "gauss" => match nums(rest)?.as_slice() {
                [sd, r] if *sd > 0.0 && *r > 0.0 => Self::Gauss { sd: *sd, radius: *r },
                _ => return Err(bad("expects sd,r with both positive")),
            },
            "table" => {
                let (head, vals) = rest.split_once(':').ok_or_else(|| bad("missing values"))?;
                let head = nums(head)?;
                let values = nums(vals)?;
                match head.as_slice() {
                    [h, x0, y0, nx] if *h > 0.0 && *nx >= 1.0 && nx.fract() == 0.0 => {
                        let nx = *nx as usize;
                        if values.len() % nx != 0 {
                            return Err(bad("value count is not a multiple of nx"));
                        }
                        Self::Table {
                            h: *h,
                            origin: [*x0, *y0],
                            nx,
                            values,
                        }
                    }
                    _ => return Err(bad("expects h,x0,y0,nx")),
                }
            }
            _ => return Err(bad("unknown kind")),
        };
        Ok(phi)
    }
}

/// Default per-cell Gauss-Legendre order for [`discretize_test_function`].
pub const CELL_QUADRATURE_ORDER: usize = 6;

/// φ_R(z) = ∫_{[z1,z1+1)×[z2,z2+1)} φ(y/√R) dy on the smallest window
/// covering the support.
///
/// Cells are split at the kinks of φ (rectangle edges, table cell edges, the
/// bump axes) and integrated with a product Gauss-Legendre rule, so the
/// rectangle indicator and tables are integrated exactly.
pub fn discretize_test_function(phi: &TestFunction, r: f64, order: usize) -> Result<Field, SimError> {
    if !(r >= 1.0) {
        return Err(SimError::Scale(r));
    }
    let sr = r.sqrt();
    let (lo, hi) = phi.support();
    let z_lo = LatticePoint::new((lo[0] * sr).floor() as i64 - 1, (lo[1] * sr).floor() as i64 - 1);
    let z_hi = LatticePoint::new((hi[0] * sr).ceil() as i64, (hi[1] * sr).ceil() as i64);
    let mut field = Field::zeros(z_lo, (z_hi.x1 - z_lo.x1 + 1) as usize, (z_hi.x2 - z_lo.x2 + 1) as usize);
    let rule = PanelRule::new(order);
    let [b1, b2] = phi.breaks();
    let scaled = |b: &[f64]| -> Vec<f64> { b.iter().map(|v| v * sr).collect() };
    let (b1, b2) = (scaled(&b1), scaled(&b2));
    let axis_nodes = |z: i64, b: &[f64]| -> Vec<(f64, f64)> {
        let (a, c) = (z as f64, z as f64 + 1.0);
        let mut cuts = vec![a];
        cuts.extend(b.iter().copied().filter(|&v| v > a && v < c));
        cuts.push(c);
        rule.on_panels(&cuts)
    };
    let xs: Vec<Vec<(f64, f64)>> = (0..field.width)
        .map(|i| axis_nodes(z_lo.x1 + i as i64, &b1))
        .collect();
    for j in 0..field.height {
        let ys = axis_nodes(z_lo.x2 + j as i64, &b2);
        for (i, xn) in xs.iter().enumerate() {
            let mut acc = CompensatedSum::new();
            for &(y2, w2) in &ys {
                for &(y1, w1) in xn {
                    acc.add(w1 * w2 * phi.eval([y1 / sr, y2 / sr]));
                }
            }
            field.values[j * field.width + i] = acc.value();
        }
    }
    Ok(field)
}

// ---------------------------------------------------------------------------
// Backward sweeps

/// Closed lattice rectangle [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: LatticePoint,
    pub hi: LatticePoint,
}

impl Rect {
    pub fn new(lo: LatticePoint, hi: LatticePoint) -> Self {
        Self { lo, hi }
    }

    /// Bounding rectangle of a field's window.
    pub fn of_field(f: &Field) -> Self {
        Self::new(
            f.offset,
            LatticePoint::new(f.offset.x1 + f.width as i64 - 1, f.offset.x2 + f.height as i64 - 1),
        )
    }

    pub fn inflate(&self, k: i64) -> Self {
        Self::new(
            LatticePoint::new(self.lo.x1 - k, self.lo.x2 - k),
            LatticePoint::new(self.hi.x1 + k, self.hi.x2 + k),
        )
    }

    pub fn intersect(&self, o: &Rect) -> Self {
        Self::new(
            LatticePoint::new(self.lo.x1.max(o.lo.x1), self.lo.x2.max(o.lo.x2)),
            LatticePoint::new(self.hi.x1.min(o.hi.x1), self.hi.x2.min(o.hi.x2)),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.hi.x1 < self.lo.x1 || self.hi.x2 < self.lo.x2
    }

    pub fn width(&self) -> usize {
        (self.hi.x1 - self.lo.x1 + 1).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.hi.x2 - self.lo.x2 + 1).max(0) as usize
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.is_empty()
            || (o.lo.x1 >= self.lo.x1 && o.lo.x2 >= self.lo.x2 && o.hi.x1 <= self.hi.x1 && o.hi.x2 <= self.hi.x2)
    }

    fn zeros(&self) -> Field {
        Field::zeros(self.lo, self.width(), self.height())
    }
}

/// Spatial truncation of the backward sweeps: after k steps from the base
/// window the field is kept on the base inflated by
/// pad(k) = min(k, ⌈b·√(k·log(1/ε))⌉) and frozen at its annealed value
/// outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub b: f64,
    pub eps: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { b: 1.0, eps: 1e-8 }
    }
}

impl Truncation {
    pub fn new(b: f64, eps: f64) -> Result<Self, SimError> {
        if !(b > 0.0 && eps > 0.0 && eps < 1.0) {
            return Err(SimError::Truncation { b, eps });
        }
        Ok(Self { b, eps })
    }

    /// Light-cone only: exact for the nearest-neighbour walk.
    pub fn exact() -> Self {
        Self {
            b: f64::INFINITY,
            eps: 0.5,
        }
    }

    pub fn pad(&self, k: usize) -> i64 {
        let g = self.b * (k as f64 * (1.0 / self.eps).ln()).sqrt();
        if g.is_finite() {
            (g.ceil() as i64).min(k as i64)
        } else {
            k as i64
        }
    }
}

/// Terminal condition of a backward sweep.
#[derive(Debug, Clone, Copy)]
pub enum Terminal<'a> {
    /// g ≡ 1 (point-to-plane).
    Ones,
    /// A finitely supported g (point-to-point).
    Field(&'a Field),
}

/// Partition-function values on a window at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldWindow {
    pub time: usize,
    pub field: Field,
}

/// Disorder source of one replica.
#[derive(Debug, Clone)]
pub struct DisorderStream<'a> {
    pub sampler: &'a SiteSampler,
    pub seed: u64,
    pub replica: u64,
}

/// Rows per parallel chunk when a slice is large enough to split.
const PAR_MIN_CELLS: usize = 1 << 16;

/// Backward sweep from time b down to a: W_b = terminal on `rect_at(b)`,
/// W_{n−1}(z) = ¼ Σ_{w∼z} e^{βω(n,w)−λ}·W_n(w), with the disorder factor
/// present only for n ≤ `disorder_end`. Outside `rect_at(n)` the product
/// e^{βω}W_n is replaced by `frozen`.
fn sweep(
    stream: &DisorderStream<'_>,
    a: usize,
    b: usize,
    disorder_end: usize,
    terminal: Terminal<'_>,
    frozen: f64,
    rect_at: impl Fn(usize) -> Rect,
) -> Field {
    let top = rect_at(b);
    let mut w = match terminal {
        Terminal::Ones => Field {
            values: vec![1.0; top.width() * top.height()],
            ..top.zeros()
        },
        Terminal::Field(g) => {
            let mut f = top.zeros();
            for (x, v) in g.support() {
                if f.contains(x) {
                    f.set(x, v);
                }
            }
            f
        }
    };
    let mut padded: Vec<f64> = Vec::new();
    for n in (a + 1..=b).rev() {
        let cur = rect_at(n);
        debug_assert_eq!((w.offset, w.width), (cur.lo, cur.width()));
        let (cw, ch) = (cur.width(), cur.height());
        let pw = cw + 2;
        padded.clear();
        padded.resize(pw * (ch + 2), frozen);
        let weighted = n <= disorder_end;
        let key = slice_key(stream.seed, stream.replica, n as u64);
        let fill = |j: usize, dst: &mut [f64]| {
            let src = &w.values[j * cw..(j + 1) * cw];
            let out = &mut dst[1..=cw];
            if weighted {
                let x2 = cur.lo.x2 + j as i64;
                stream.sampler.fill_weights(row_key(key, x2), cur.lo.x1, out);
                out.iter_mut().zip(src).for_each(|(o, s)| *o *= s);
            } else {
                out.copy_from_slice(src);
            }
        };
        let interior = &mut padded[pw..pw * (ch + 1)];
        if cw * ch >= PAR_MIN_CELLS {
            interior
                .par_chunks_mut(pw)
                .enumerate()
                .for_each(|(j, row)| fill(j, row));
        } else {
            interior.chunks_mut(pw).enumerate().for_each(|(j, row)| fill(j, row));
        }

        let next = rect_at(n - 1);
        debug_assert!(cur.inflate(1).contains_rect(&next));
        let mut out = next.zeros();
        let (nw, nh) = (next.width(), next.height());
        // padded index of lattice point x: (x2 − lo2 + 1)·pw + (x1 − lo1 + 1)
        let di = (next.lo.x1 - cur.lo.x1 + 1) as usize;
        let dj = (next.lo.x2 - cur.lo.x2 + 1) as usize;
        let avg = |j: usize, row: &mut [f64]| {
            let c = (dj + j) * pw + di;
            let (up, mid, down) = (&padded[c - pw..], &padded[c - 1..], &padded[c + pw..]);
            for i in 0..nw {
                row[i] = 0.25 * (mid[i] + mid[i + 2] + up[i] + down[i]);
            }
        };
        if nw * nh >= PAR_MIN_CELLS {
            out.values.par_chunks_mut(nw).enumerate().for_each(|(j, r)| avg(j, r));
        } else {
            out.values.chunks_mut(nw).enumerate().for_each(|(j, r)| avg(j, r));
        }
        w = out;
    }
    w
}

/// Z_{(a,b],β}(z) (g ≡ 1) or its point-to-point analogue with terminal g,
/// on the window `base` at time a.
///
/// The sweep keeps the field on `base` inflated by `trunc.pad(n − a)` at
/// time n; the terminal support must fit inside the window at time b.
pub fn evolve_partition_field(
    a: usize,
    b: usize,
    stream: &DisorderStream<'_>,
    terminal: Terminal<'_>,
    base: Rect,
    trunc: &Truncation,
) -> Result<FieldWindow, SimError> {
    if b <= a {
        return Err(SimError::EmptyWindow { a, b });
    }
    let rect_at = |n: usize| base.inflate(trunc.pad(n - a));
    let frozen = match terminal {
        Terminal::Ones => 1.0,
        Terminal::Field(g) => {
            if let Some((lo, hi)) = g.support_box() {
                if !rect_at(b).contains_rect(&Rect::new(lo, hi)) {
                    return Err(SimError::BoxTooSmall);
                }
            }
            0.0
        }
    };
    let field = sweep(stream, a, b, b, terminal, frozen, rect_at);
    Ok(FieldWindow { time: a, field })
}

/// 𝒵_{L,β}(f,g) = Σ_{z,w} f(z) 𝒵_{L,β}(z,w) g(w) with disorder at times
/// 1..L−1; exact, since the sweep keeps every site lying on a path from the
/// support of f to that of g.
pub fn point_to_point_partition(l: usize, stream: &DisorderStream<'_>, f: &Field, g: &Field) -> f64 {
    let (Some((flo, fhi)), Some((glo, ghi))) = (f.support_box(), g.support_box()) else {
        return 0.0;
    };
    if l == 0 {
        return csum_product(f, g);
    }
    let (fr, gr) = (Rect::new(flo, fhi), Rect::new(glo, ghi));
    let rect_at = |n: usize| fr.inflate(n as i64).intersect(&gr.inflate((l - n) as i64));
    if rect_at(0).is_empty() {
        return 0.0;
    }
    let w = sweep(stream, 0, l, l - 1, Terminal::Field(g), 0.0, rect_at);
    csum_product(f, &w)
}

fn csum_product(f: &Field, g: &Field) -> f64 {
    let mut acc = CompensatedSum::new();
    for (x, v) in f.support() {
        acc.add(v * g.get(x));
    }
    acc.value()
}

/// q_k^{φ}(x) = Σ_z q_k(x − z) φ(z), kept on the support box of φ inflated
/// by `trunc.pad(k)`.
pub fn truncated_heat_average(phi: &Field, k: usize, trunc: &Truncation) -> Field {
    let Some((lo, hi)) = phi.support_box() else {
        return phi.clone();
    };
    let base = Rect::new(lo, hi);
    let mut cur = crop(phi, &base);
    for s in 1..=k {
        let stepped = step(&cur);
        cur = crop(&stepped, &base.inflate(trunc.pad(s)));
    }
    cur
}

fn crop(f: &Field, r: &Rect) -> Field {
    let mut out = r.zeros();
    for j in 0..out.height {
        for i in 0..out.width {
            let x = out.point(j * out.width + i);
            out.values[j * out.width + i] = f.get(x);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// X_N and its blocks

/// Everything about X^{(i)}_{N,M} that does not depend on the replica.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    /// Window (a, b] = ((i−1)N/M, iN/M].
    pub a: usize,
    pub b: usize,
    /// √θ_N / N.
    pub prefactor: f64,
    /// ψ = q_a^{φ_N}, the law of the walk at time a started from φ_N.
    pub psi: Field,
    pub trunc: Truncation,
    sampler: SiteSampler,
}

impl BlockSampler {
    pub fn new(
        n: usize,
        m: usize,
        i: usize,
        cal: &Calibration,
        phi_n: &Field,
        trunc: Truncation,
    ) -> Result<Self, SimError> {
        if m == 0 || !n.is_multiple_of(m) {
            return Err(SimError::NotDivisible { n, m });
        }
        if i == 0 || i > m {
            return Err(SimError::BlockIndex { i, m });
        }
        let l = n / m;
        let (a, b) = ((i - 1) * l, i * l);
        Ok(Self {
            n,
            m,
            i,
            a,
            b,
            prefactor: cal.theta.sqrt() / n as f64,
            psi: truncated_heat_average(phi_n, a, &trunc),
            trunc,
            sampler: SiteSampler::new(&cal.model, cal.beta),
        })
    }

    /// X^{(i)}_{N,M} for one replica.
    pub fn sample(&self, seed: u64, replica: u64) -> f64 {
        if self.psi.is_zero() {
            return 0.0;
        }
        let stream = DisorderStream {
            sampler: &self.sampler,
            seed,
            replica,
        };
        let base = Rect::of_field(&self.psi);
        let rect_at = |t: usize| base.inflate(self.trunc.pad(t - self.a));
        let w = sweep(&stream, self.a, self.b, self.b, Terminal::Ones, 1.0, rect_at);
        let mut acc = CompensatedSum::new();
        for (k, &p) in self.psi.values.iter().enumerate() {
            if p != 0.0 {
                acc.add((w.values[k] - 1.0) * p);
            }
        }
        self.prefactor * acc.value()
    }

    /// Number of site updates per replica, a proxy for its cost.
    pub fn site_updates(&self) -> usize {
        let base = Rect::of_field(&self.psi);
        (self.a + 1..=self.b)
            .map(|t| {
                let r = base.inflate(self.trunc.pad(t - self.a));
                r.width() * r.height()
            })
            .sum()
    }
}

/// X^{(i)}_{N,M} for one replica (X_N when M = i = 1).
#[allow(clippy::too_many_arguments)]
pub fn sample_x(
    n: usize,
    m: usize,
    i: usize,
    cal: &Calibration,
    phi_n: &Field,
    seed: u64,
    replica: u64,
    trunc: Truncation,
) -> Result<f64, SimError> {
    Ok(BlockSampler::new(n, m, i, cal, phi_n, trunc)?.sample(seed, replica))
}

/// Evaluate `f` on replicas `0..count` with at most `workers` threads; the
/// output is in replica order and independent of `workers`.
pub fn run_replicas<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers <= 1 {
        return (0..count as u64).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}

/// One CSV row of Monte Carlo output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleRow {
    pub replica: u64,
    pub i: usize,
    pub value: f64,
}

/// Write rows as `replica,i,value` with round-trip float formatting.
pub fn write_sample_csv<W: std::io::Write>(rows: &[SampleRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "replica,i,value")?;
    for r in rows {
        writeln!(w, "{},{},{:e}", r.replica, r.i, r.value)?;
    }
    Ok(())
}
