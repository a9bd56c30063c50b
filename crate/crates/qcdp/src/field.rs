//! Dense real fields on rectangular windows of ℤ².

use serde::{Deserialize, Serialize};

/// A point of ℤ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub x1: i64,
    pub x2: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x1: 0, x2: 0 };

    pub const fn new(x1: i64, x2: i64) -> Self {
        Self { x1, x2 }
    }

    /// (n + x1 + x2) mod 2; transition probabilities vanish when this is 1.
    pub fn parity(&self, n: u64) -> u8 {
        ((n as i64 + self.x1 + self.x2).rem_euclid(2)) as u8
    }

    pub fn norm_sq(&self) -> i64 {
        self.x1 * self.x1 + self.x2 * self.x2
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn l1(&self) -> i64 {
        self.x1.abs() + self.x2.abs()
    }

    pub fn neighbours(&self) -> [LatticePoint; 4] {
        [
            Self::new(self.x1 + 1, self.x2),
            Self::new(self.x1 - 1, self.x2),
            Self::new(self.x1, self.x2 + 1),
            Self::new(self.x1, self.x2 - 1),
        ]
    }
}

impl std::ops::Sub for LatticePoint {
    type Output = LatticePoint;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl std::ops::Add for LatticePoint {
    type Output = LatticePoint;
    fn add(self, o: Self) -> Self {
        Self::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

/// Real values on the window `offset + [0, width) × [0, height)`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub offset: LatticePoint,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(offset: LatticePoint, width: usize, height: usize) -> Self {
        Self {
            offset,
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Square window `[-r, r]²` filled with zeros.
    pub fn centred(r: usize) -> Self {
        let r_i = r as i64;
        Self::zeros(LatticePoint::new(-r_i, -r_i), 2 * r + 1, 2 * r + 1)
    }

    pub fn point_mass(at: LatticePoint, mass: f64) -> Self {
        Self {
            offset: at,
            width: 1,
            height: 1,
            values: vec![mass],
        }
    }

    /// Constant `c` on the box `[lo, hi]` (inclusive corners).
    pub fn constant_on(lo: LatticePoint, hi: LatticePoint, c: f64) -> Self {
        let w = (hi.x1 - lo.x1 + 1).max(0) as usize;
        let h = (hi.x2 - lo.x2 + 1).max(0) as usize;
        Self {
            offset: lo,
            width: w,
            height: h,
            values: vec![c; w * h],
        }
    }

    #[inline]
    fn index(&self, x: LatticePoint) -> Option<usize> {
        let i = x.x1 - self.offset.x1;
        let j = x.x2 - self.offset.x2;
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            None
        } else {
            Some(j as usize * self.width + i as usize)
        }
    }

    pub fn contains(&self, x: LatticePoint) -> bool {
        self.index(x).is_some()
    }

    pub fn get(&self, x: LatticePoint) -> f64 {
        self.index(x).map_or(0.0, |k| self.values[k])
    }

    /// Panics if `x` lies outside the window.
    pub fn set(&mut self, x: LatticePoint, v: f64) {
        let k = self.index(x).expect("point outside field window");
        self.values[k] = v;
    }

    pub fn add_at(&mut self, x: LatticePoint, v: f64) {
        let k = self.index(x).expect("point outside field window");
        self.values[k] += v;
    }

    /// Lattice point of the flat index `k`.
    pub fn point(&self, k: usize) -> LatticePoint {
        LatticePoint::new(
            self.offset.x1 + (k % self.width) as i64,
            self.offset.x2 + (k / self.width) as i64,
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (self.point(k), v))
    }

    /// Points with nonzero value.
    pub fn support(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.iter().filter(|&(_, v)| v != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn sum(&self) -> f64 {
        crate::numerics::csum(self.values.iter().copied())
    }

    /// Bounding box (lo, hi) of the nonzero values, `None` for the zero field.
    pub fn support_box(&self) -> Option<(LatticePoint, LatticePoint)> {
        let mut lo = LatticePoint::new(i64::MAX, i64::MAX);
        let mut hi = LatticePoint::new(i64::MIN, i64::MIN);
        let mut any = false;
        for (p, _) in self.support() {
            any = true;
            lo = LatticePoint::new(lo.x1.min(p.x1), lo.x2.min(p.x2));
            hi = LatticePoint::new(hi.x1.max(p.x1), hi.x2.max(p.x2));
        }
        any.then_some((lo, hi))
    }

    /// Copy into a window enlarged by `pad` on every side.
    pub fn padded(&self, pad: usize) -> Self {
        let p = pad as i64;
        let mut out = Self::zeros(
            LatticePoint::new(self.offset.x1 - p, self.offset.x2 - p),
            self.width + 2 * pad,
            self.height + 2 * pad,
        );
        for j in 0..self.height {
            let src = &self.values[j * self.width..(j + 1) * self.width];
            let start = (j + pad) * out.width + pad;
            out.values[start..start + self.width].copy_from_slice(src);
        }
        out
    }

    /// Largest absolute value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
