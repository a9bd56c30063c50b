//! Disorder laws ω, the cumulant generating function λ(β), moments of
//! ξ = e^{βω−λ(β)} − 1, calibration of β to the quasi-critical scaling, and a
//! counter-based sampler addressed by (seed, replica, time, site).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, LatticePoint};
use crate::lattice_rw::replica_overlap;
use crate::numerics::{adaptive_integral, csum, CompensatedSum};
use crate::partitions_moments::{enumerate_partitions, SetPartition};

#[derive(Debug, Error, PartialEq)]
pub enum DisorderError {
    #[error("unknown disorder law '{0}'")]
    UnknownLaw(String),
    #[error("malformed disorder law '{0}': {1}")]
    Malformed(String, String),
    #[error("calibration target σ² = {0} is not positive")]
    NonPositiveTarget(f64),
    #[error("calibration target σ² = {0} is not reachable by this law")]
    Unreachable(f64),
    #[error("θ = {theta} outside (0, log N = {log_n}) for the quasi-critical regime")]
    ThetaRange { theta: f64, log_n: f64 },
    #[error("moment of the star partition is not defined")]
    StarPartition,
    #[error("unknown θ mode '{0}'")]
    ThetaMode(String),
    #[error("unknown regime '{0}'")]
    Regime(String),
}

/// A disorder law with mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DisorderModel {
    Gaussian,
    Rademacher,
    /// Centred and scaled Bernoulli(p).
    Bernoulli { p: f64 },
    /// Finite law, standardised to mean 0 and variance 1 on construction.
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl DisorderModel {
    /// Finite law from (value, weight) pairs, standardised to mean 0 and
    /// variance 1; weights are normalised to sum 1.
    pub fn discrete(pairs: &[(f64, f64)]) -> Result<Self, DisorderError> {
        let name = || format!("{pairs:?}");
        if pairs.is_empty() || pairs.iter().any(|&(v, w)| !(w > 0.0) || !v.is_finite()) {
            return Err(DisorderError::Malformed(name(), "weights must be positive".into()));
        }
        let total = csum(pairs.iter().map(|p| p.1));
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let mean = csum(pairs.iter().zip(&weights).map(|(p, w)| p.0 * w));
        let var = csum(pairs.iter().zip(&weights).map(|(p, w)| (p.0 - mean).powi(2) * w));
        if !(var > 0.0) {
            return Err(DisorderError::Malformed(name(), "law is degenerate".into()));
        }
        let sd = var.sqrt();
        Ok(Self::Discrete {
            values: pairs.iter().map(|p| (p.0 - mean) / sd).collect(),
            weights,
        })
    }

    /// Atoms (value, weight) for finite laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::Gaussian => None,
            Self::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Self::Bernoulli { p } => {
                let s = (p * (1.0 - p)).sqrt();
                Some(vec![(-p / s, 1.0 - p), ((1.0 - p) / s, *p)])
            }
            Self::Discrete { values, weights } => {
                Some(values.iter().copied().zip(weights.iter().copied()).collect())
            }
        }
    }

    /// λ(β) = log E[e^{βω}].
    pub fn cgf(&self, beta: f64) -> f64 {
        match self {
            Self::Gaussian => beta * beta / 2.0,
            Self::Rademacher => {
                // log cosh β, stable for large |β|
                let a = beta.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            _ => {
                let atoms = self.atoms().expect("finite law");
                let m = atoms
                    .iter()
                    .map(|&(v, _)| beta * v)
                    .fold(f64::NEG_INFINITY, f64::max);
                m + csum(atoms.iter().map(|&(v, w)| w * (beta * v - m).exp())).ln()
            }
        }
    }

    /// σ_β² = e^{λ(2β) − 2λ(β)} − 1.
    pub fn xi_variance(&self, beta: f64) -> f64 {
        (self.cgf(2.0 * beta) - 2.0 * self.cgf(beta)).exp_m1()
    }

    /// E[ξ^k] by binomial expansion in e^{λ(jβ) − jλ(β)}.
    pub fn xi_moment(&self, beta: f64, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if k == 1 {
            return 0.0;
        }
        if k == 2 {
            return self.xi_variance(beta);
        }
        let lam = self.cgf(beta);
        let mut acc = CompensatedSum::new();
        let mut binom = 1.0;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            let sign = if (k - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            let jf = j as f64;
            acc.add(sign * binom * (self.cgf(jf * beta) - jf * lam).exp());
        }
        acc.value()
    }

    /// E[|ξ|^k]; exact for finite laws, adaptive quadrature for the Gaussian.
    pub fn xi_abs_moment(&self, beta: f64, k: u32) -> f64 {
        let lam = self.cgf(beta);
        match self.atoms() {
            Some(atoms) => csum(
                atoms
                    .iter()
                    .map(|&(v, w)| w * (beta * v - lam).exp_m1().abs().powi(k as i32)),
            ),
            None => {
                if beta == 0.0 {
                    return 0.0;
                }
                let dens = |w: f64| (-w * w / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let f = |w: f64| (beta * w - lam).exp_m1().abs().powi(k as i32) * dens(w);
                // ξ changes sign at ω = λ/β
                let w0 = lam / beta;
                let span = 12.0 + (k as f64) * beta.abs();
                adaptive_integral(f, -span, w0, 1e-15) + adaptive_integral(f, w0, span + w0, 1e-15)
            }
        }
    }

    /// E[ξ^I] = Π over blocks of size ≥ 2 of E[ξ^{|block|}].
    pub fn xi_partition_moment(&self, beta: f64, part: &SetPartition) -> Result<f64, DisorderError> {
        if part.is_star() {
            return Err(DisorderError::StarPartition);
        }
        Ok(part
            .blocks()
            .iter()
            .filter(|b| b.len() >= 2)
            .map(|b| self.xi_moment(beta, b.len() as u32))
            .product())
    }
}

impl fmt::Display for DisorderModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::Rademacher => write!(f, "rademacher"),
            Self::Bernoulli { p } => write!(f, "bernoulli:{p}"),
            Self::Discrete { values, weights } => {
                let parts: Vec<String> = values
                    .iter()
                    .zip(weights)
                    .map(|(v, w)| format!("{v},{w}"))
                    .collect();
                write!(f, "discrete:{}", parts.join(";"))
            }
        }
    }
}

impl FromStr for DisorderModel {
    type Err = DisorderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = |why: &str| DisorderError::Malformed(s.to_string(), why.to_string());
        match s {
            "gaussian" => return Ok(Self::Gaussian),
            "rademacher" => return Ok(Self::Rademacher),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("bernoulli:") {
            let p: f64 = p.parse().map_err(|_| bad("p is not a number"))?;
            if !(p > 0.0 && p < 1.0) {
                return Err(bad("p must lie in (0, 1)"));
            }
            return Ok(Self::Bernoulli { p });
        }
        if let Some(rest) = s.strip_prefix("discrete:") {
            let mut pairs = Vec::new();
            for item in rest.split(';').filter(|t| !t.trim().is_empty()) {
                let mut it = item.split(',');
                let (Some(v), Some(w), None) = (it.next(), it.next(), it.next()) else {
                    return Err(bad("expected value,weight pairs"));
                };
                let v: f64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
                let w: f64 = w.trim().parse().map_err(|_| bad("weight is not a number"))?;
                pairs.push((v, w));
            }
            return Self::discrete(&pairs).map_err(|_| bad("weights must be positive and law nondegenerate"));
        }
        Err(DisorderError::UnknownLaw(s.to_string()))
    }
}

/// Report of [`dismom_constants`].
#[derive(Debug, Clone, Serialize)]
pub struct DismomReport {
    pub h: usize,
    pub sigma_sq: f64,
    /// Fitted C_k = E|ξ|^k / σ^k for k = 2..=h (index k − 2).
    pub c_k: Vec<f64>,
    /// max over non-star partitions of Π C_{|block|}.
    pub c_h: f64,
    pub partitions_checked: usize,
    pub sequences_checked: usize,
    pub violations: Vec<String>,
}

/// Check |E ξ^I| ≤ σ² (pairs), ≤ C(h)σ³ (other non-star partitions) and the
/// full-support sequence bound C(h)^r σ^{max(2r, h)} for r ≤ 3.
pub fn dismom_constants(model: &DisorderModel, beta: f64, h: usize) -> DismomReport {
    let s2 = model.xi_variance(beta);
    let s = s2.sqrt();
    let c_k: Vec<f64> = (2..=h as u32)
        .map(|k| {
            if k == 2 {
                1.0
            } else {
                model.xi_abs_moment(beta, k) / s.powi(k as i32)
            }
        })
        .collect();
    let parts: Vec<SetPartition> = enumerate_partitions(h)
        .expect("h within range")
        .into_iter()
        .filter(|p| !p.is_star())
        .collect();
    let constant = |p: &SetPartition| -> f64 {
        p.blocks()
            .iter()
            .filter(|b| b.len() >= 2)
            .map(|b| c_k[b.len() - 2])
            .product()
    };
    let c_h = parts.iter().map(constant).fold(1.0f64, f64::max);
    let tol = 1e-12;
    let mut violations = Vec::new();
    let moments: Vec<f64> = parts
        .iter()
        .map(|p| model.xi_partition_moment(beta, p).expect("non-star"))
        .collect();
    for (p, &m) in parts.iter().zip(&moments) {
        let bound = if p.is_pair() { s2 } else { c_h * s2 * s };
        if m.abs() > bound * (1.0 + tol) + 1e-300 {
            violations.push(format!("{p}: |E ξ^I| = {m:e} > {bound:e}"));
        }
        if p.is_pair() && (m.abs() - s2).abs() > tol * s2 {
            violations.push(format!("{p}: pair moment {m:e} differs from σ² = {s2:e}"));
        }
    }
    let mut sequences_checked = 0;
    let full = (1u32 << h) - 1;
    let mut stack: Vec<(usize, Option<usize>, u32, f64)> = vec![(0, None, 0, 1.0)];
    while let Some((r, last, mask, prod)) = stack.pop() {
        if r > 0 && mask == full {
            sequences_checked += 1;
            let bound = c_h.powi(r as i32) * s.powi((2 * r).max(h) as i32);
            if prod.abs() > bound * (1.0 + tol) + 1e-300 {
                violations.push(format!("sequence of length {r}: {prod:e} > {bound:e}"));
            }
        }
        if r == 3 {
            continue;
        }
        for (k, p) in parts.iter().enumerate() {
            if Some(k) != last {
                stack.push((r + 1, Some(k), mask | p.support_mask(), prod * moments[k]));
            }
        }
    }
    DismomReport {
        h,
        sigma_sq: s2,
        c_k,
        c_h,
        partitions_checked: parts.len(),
        sequences_checked,
        violations,
    }
}

/// Scaling regime of the calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// σ²R_N = 1 − θ/log N.
    QuasiCritical,
    /// σ²R_N = 1 + θ/log N.
    CriticalWindow,
}

impl FromStr for Regime {
    type Err = DisorderError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quasi-critical" | "quasi_critical" => Ok(Self::QuasiCritical),
            "critical-window" | "critical_window" => Ok(Self::CriticalWindow),
            _ => Err(DisorderError::Regime(s.to_string())),
        }
    }
}

/// How θ_N is chosen as a function of N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub enum ThetaMode {
    /// θ = √(log N).
    #[default]
    SqrtLog,
    /// θ = (log N)^α.
    Pow(f64),
    /// θ fixed.
    Fixed(f64),
}

impl ThetaMode {
    pub fn resolve(&self, n: usize) -> f64 {
        let l = (n as f64).ln();
        match *self {
            Self::SqrtLog => l.sqrt(),
            Self::Pow(a) => l.powf(a),
            Self::Fixed(v) => v,
        }
    }
}


impl fmt::Display for ThetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SqrtLog => write!(f, "sqrt_log"),
            Self::Pow(a) => write!(f, "pow:{a}"),
            Self::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for ThetaMode {
    type Err = DisorderError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DisorderError::ThetaMode(s.to_string());
        if s == "sqrt_log" {
            return Ok(Self::SqrtLog);
        }
        if let Some(a) = s.strip_prefix("pow:") {
            return a.parse().map(Self::Pow).map_err(|_| bad());
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            return v.parse().map(Self::Fixed).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// A solved disorder strength for system size N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: DisorderModel,
    pub n: usize,
    pub theta: f64,
    pub regime: Regime,
    pub beta: f64,
    pub sigma_sq: f64,
    /// λ(β).
    pub lambda: f64,
    /// R_N.
    pub r_n: f64,
}

impl Calibration {
    /// 1 − σ²R_N.
    pub fn gap(&self) -> f64 {
        1.0 - self.sigma_sq * self.r_n
    }
}

/// Solve σ_β² R_N = 1 ∓ θ/log N for β by bisection.
pub fn calibrate(
    model: &DisorderModel,
    n: usize,
    theta: f64,
    regime: Regime,
) -> Result<Calibration, DisorderError> {
    let log_n = (n as f64).ln();
    if regime == Regime::QuasiCritical && !(theta > 0.0 && theta <= log_n) {
        return Err(DisorderError::ThetaRange { theta, log_n });
    }
    let r_n = replica_overlap(n);
    let ratio = match regime {
        Regime::QuasiCritical => 1.0 - theta / log_n,
        Regime::CriticalWindow => 1.0 + theta / log_n,
    };
    let target = ratio / r_n;
    if target < 0.0 || (target == 0.0 && regime == Regime::CriticalWindow) {
        return Err(DisorderError::NonPositiveTarget(target));
    }
    let beta = if target == 0.0 {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while model.xi_variance(hi) < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e3 {
                return Err(DisorderError::Unreachable(target));
            }
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if model.xi_variance(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // pick the endpoint with the smaller residual
        let rl = (model.xi_variance(lo) - target).abs();
        let rh = (model.xi_variance(hi) - target).abs();
        if rl <= rh {
            lo
        } else {
            hi
        }
    };
    Ok(Calibration {
        model: model.clone(),
        n,
        theta,
        regime,
        beta,
        sigma_sq: model.xi_variance(beta),
        lambda: model.cgf(beta),
        r_n,
    })
}

// ---------------------------------------------------------------------------
// Counter-based sampling

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of the disorder at one (seed, replica, time).
#[inline]
pub fn slice_key(seed: u64, replica: u64, time: u64) -> u64 {
    let a = mix64(seed ^ 0x5155_4144_5052_4e47);
    let b = mix64(a.wrapping_add(replica.wrapping_mul(GAMMA)) ^ 0x7265_706c);
    mix64(b.wrapping_add(time.wrapping_mul(GAMMA)) ^ 0x7469_6d65)
}

/// Key of one lattice row x2 within a slice.
#[inline]
pub fn row_key(slice: u64, x2: i64) -> u64 {
    mix64(slice ^ (x2 as u64).wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// 64-bit hash of site x1 within a row: a SplitMix64 stream indexed by x1.
#[inline(always)]
pub fn site_bits(row: u64, x1: i64) -> u64 {
    mix64(row.wrapping_add((x1 as u64).wrapping_mul(GAMMA)))
}

/// Uniform in (0, 1) from the top 53 bits, never 0 or 1.
#[inline(always)]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as i64 as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse standard normal CDF (Wichura's AS241, PPND16).
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301227 + 33430.57558358813) * r
                + 67265.7709270087)
                * r
                + 45921.95393154987)
                * r
                + 13731.69376550946)
                * r
                + 1971.5909503065513)
                * r
                + 133.14166789178438)
                * r
                + 3.3871328727963665)
            / (((((((r * 5226.495278852545 + 28729.085735721943) * r
                + 39307.89580009271)
                * r
                + 21213.794301586595)
                * r
                + 5394.196021424751)
                * r
                + 687.1870074920579)
                * r
                + 42.31333070160091)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.745450142783414e-4 + 0.022723844989269184) * r
            + 0.2417807251774506)
            * r
            + 1.2704582524523684)
            * r
            + 3.6478483247632045)
            * r
            + 5.769497221460691)
            * r
            + 4.630337846156546)
            * r
            + 1.4234371107496835)
            / (((((((r * 1.0507500716444169e-9 + 5.475938084995344e-4) * r
                + 0.015198666563616457)
                * r
                + 0.14810397642748007)
                * r
                + 0.6897673349851)
                * r
                + 1.6763848301838038)
                * r
                + 2.053191626637759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.0103343992922881e-7 + 2.7115555687434876e-5) * r
            + 0.0012426609473880784)
            * r
            + 0.026532189526576123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_104)
            / (((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Precomputed sampler for one (law, β): maps site hashes to ω and to the
/// multiplicative weight e^{βω − λ(β)}.
#[derive(Debug, Clone)]
pub struct SiteSampler {
    kind: SamplerKind,
    beta: f64,
    lambda: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian(std::sync::Arc<GaussWeightTable>),
    Rademacher { up: f64, down: f64 },
    /// cumulative thresholds on 53-bit integers with atom values and weights
    Finite { cut: Vec<u64>, omega: Vec<f64>, weight: Vec<f64> },
}

impl SiteSampler {
    pub fn new(model: &DisorderModel, beta: f64) -> Self {
        let lambda = model.cgf(beta);
        let kind = match model {
            DisorderModel::Gaussian => SamplerKind::Gaussian(std::sync::Arc::new(GaussWeightTable::new(beta, lambda))),
            DisorderModel::Rademacher => SamplerKind::Rademacher {
                up: (beta - lambda).exp(),
                down: (-beta - lambda).exp(),
            },
            _ => {
                let atoms = model.atoms().expect("finite law");
                let scale = (1u64 << 53) as f64;
                let mut acc = 0.0;
                let mut cut = Vec::new();
                for &(_, w) in &atoms[..atoms.len() - 1] {
                    acc += w;
                    cut.push((acc * scale).round() as u64);
                }
                cut.push(u64::MAX);
                SamplerKind::Finite {
                    cut,
                    omega: atoms.iter().map(|a| a.0).collect(),
                    weight: atoms.iter().map(|a| (beta * a.0 - lambda).exp()).collect(),
                }
            }
        };
        Self { kind, beta, lambda }
    }

    pub fn is_rademacher(&self) -> bool {
        matches!(self.kind, SamplerKind::Rademacher { .. })
    }

    /// ω at site x1 of the row with key `row`.
    #[inline]
    pub fn omega(&self, row: u64, x1: i64) -> f64 {
        match &self.kind {
            SamplerKind::Gaussian(_) => normal_quantile(unit_open(site_bits(row, x1))),
            SamplerKind::Rademacher { .. } => {
                if rademacher_bit(row, x1) {
                    1.0
                } else {
                    -1.0
                }
            }
            SamplerKind::Finite { cut, omega, .. } => {
                let u = site_bits(row, x1) >> 11;
                omega[cut.iter().position(|&c| u < c).expect("last cut is u64::MAX")]
            }
        }
    }

    /// e^{βω − λ} for x1 = start..start + out.len() in the row `row`.
    #[inline]
    pub fn fill_weights(&self, row: u64, start: i64, out: &mut [f64]) {
        match &self.kind {
            SamplerKind::Gaussian(table) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = table.weight_bits(site_bits(row, start + k as i64));
                }
                for (k, o) in out.iter_mut().enumerate() {
                    if o.is_nan() {
                        let p = unit_open(site_bits(row, start + k as i64));
                        *o = (self.beta * normal_quantile(p) - self.lambda).exp();
                    }
                }
            }
            SamplerKind::Rademacher { up, down } => {
                let (up, down) = (*up, *down);
                let mut k = 0usize;
                let len = out.len();
                while k < len {
                    let x1 = start + k as i64;
                    let word = rademacher_word(row, x1.div_euclid(64));
                    let bit0 = x1.rem_euclid(64) as u32;
                    let take = ((64 - bit0) as usize).min(len - k);
                    let bits = word >> bit0;
                    for b in 0..take {
                        out[k + b] = if (bits >> b) & 1 == 1 { up } else { down };
                    }
                    k += take;
                }
            }
            SamplerKind::Finite { cut, weight, .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let u = site_bits(row, start + k as i64) >> 11;
                    *o = weight[cut.iter().position(|&c| u < c).expect("last cut is u64::MAX")];
                }
            }
        }
    }
}

/// log2 of the number of cells per level of the Gaussian weight table.
const GAUSS_CELL_BITS: u32 = 13;
const GAUSS_CELLS: usize = 1 << GAUSS_CELL_BITS;
/// The two outer levels refine p < 2^{-4} and p ≥ 1 − 2^{-4}.
const GAUSS_PREFIX_BITS: u32 = 4;
/// Outer-level cells closer to 0 or 1 than this are evaluated directly.
const GAUSS_SKIP: usize = GAUSS_CELLS / 20;

/// Piecewise cubic Hermite interpolant of p ↦ e^{βΦ^{-1}(p) − λ}, indexed
/// directly by the bits of the site hash.
///
/// The central level has uniform cells on [0, 1]; two finer levels cover
/// [0, 2^{-4}) and [1 − 2^{-4}, 1). Cells within 0.003 of 0 or 1 hold NaN and
/// are evaluated directly by the caller. Relative error below 1e−12 for β ≤ 1.
#[derive(Debug, Clone)]
struct GaussWeightTable {
    /// Levels: central, low, high.
    coeffs: Vec<[f64; 4]>,
}

impl GaussWeightTable {
    fn new(beta: f64, lambda: f64) -> Self {
        let node = |p: f64, h: f64| {
            let z = normal_quantile(p);
            let w = (beta * z - lambda).exp();
            // dw/dp = βw/φ(z), scaled to the unit cell
            let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            (w, beta * w / dens * h)
        };
        let level = |base: f64, h: f64, cells: std::ops::Range<usize>| -> Vec<[f64; 4]> {
            (0..GAUSS_CELLS)
                .map(|k| {
                    if !cells.contains(&k) {
                        return [f64::NAN; 4];
                    }
                    let (y0, d0) = node(base + k as f64 * h, h);
                    let (y1, d1) = node(base + (k + 1) as f64 * h, h);
                    [y0, d0, 3.0 * (y1 - y0) - 2.0 * d0 - d1, 2.0 * (y0 - y1) + d0 + d1]
                })
                .collect()
        };
        let h0 = 1.0 / GAUSS_CELLS as f64;
        let h1 = h0 / (1u64 << GAUSS_PREFIX_BITS) as f64;
        let outer = 1.0 - 1.0 / (1u64 << GAUSS_PREFIX_BITS) as f64;
        let mut coeffs = level(0.0, h0, 0..GAUSS_CELLS);
        coeffs.extend(level(0.0, h1, GAUSS_SKIP..GAUSS_CELLS));
        coeffs.extend(level(outer, h1, 0..GAUSS_CELLS - GAUSS_SKIP));
        Self { coeffs }
    }

    /// Interpolant at p = unit_open(bits); NaN where the caller must
    /// evaluate directly.
    #[inline(always)]
    fn weight_bits(&self, bits: u64) -> f64 {
        let top = bits >> (64 - GAUSS_PREFIX_BITS);
        let outer = top == 0 || top == (1 << GAUSS_PREFIX_BITS) - 1;
        let (level, prefix) = match (outer, top) {
            (false, _) => (0, 0),
            (true, 0) => (1, GAUSS_PREFIX_BITS),
            _ => (2, GAUSS_PREFIX_BITS),
        };
        let cell = ((bits >> (64 - prefix - GAUSS_CELL_BITS)) as usize) & (GAUSS_CELLS - 1);
        let frac_bits = 53 - prefix - GAUSS_CELL_BITS;
        let frac = ((bits >> 11) & ((1u64 << frac_bits) - 1)) as i64 as f64;
        let t = (frac + 0.5) / (1u64 << frac_bits) as f64;
        let c = &self.coeffs[level * GAUSS_CELLS + cell];
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }
}

#[inline(always)]
fn rademacher_word(row: u64, chunk: i64) -> u64 {
    mix64(row.wrapping_add((chunk as u64).wrapping_mul(GAMMA)) ^ 0x5241_4445_4d41_4348)
}

#[inline(always)]
fn rademacher_bit(row: u64, x1: i64) -> bool {
    (rademacher_word(row, x1.div_euclid(64)) >> x1.rem_euclid(64)) & 1 == 1
}

/// Disorder address of one time slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceAddress {
    pub seed: u64,
    pub replica: u64,
    pub time: u64,
}

/// ξ and ω on the window `offset + [0,width) × [0,height)` of one slice.
pub fn sample_slice(
    model: &DisorderModel,
    beta: f64,
    addr: SliceAddress,
    offset: LatticePoint,
    width: usize,
    height: usize,
) -> (Field, Field) {
    let sampler = SiteSampler::new(model, beta);
    let key = slice_key(addr.seed, addr.replica, addr.time);
    let mut xi = Field::zeros(offset, width, height);
    let mut om = Field::zeros(offset, width, height);
    let mut row = vec![0.0; width];
    for j in 0..height {
        let x2 = offset.x2 + j as i64;
        let rk = row_key(key, x2);
        sampler.fill_weights(rk, offset.x1, &mut row);
        for i in 0..width {
            xi.values[j * width + i] = row[i] - 1.0;
            om.values[j * width + i] = sampler.omega(rk, offset.x1 + i as i64);
        }
    }
    (xi, om)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn cgf_examples() {
        assert_eq!(DisorderModel::Gaussian.cgf(1.0), 0.5);
        assert!((DisorderModel::Rademacher.cgf(1.0) - 1f64.cosh().ln()).abs() < 1e-15);
        for m in laws() {
            assert_eq!(m.cgf(0.0), 0.0);
        }
    }

    fn laws() -> Vec<DisorderModel> {
        vec![
            DisorderModel::Gaussian,
            DisorderModel::Rademacher,
            DisorderModel::Bernoulli { p: 0.3 },
            "discrete:-1,1;0,2;2,1".parse().unwrap(),
        ]
    }

    #[test]
    fn law_strings_round_trip() {
        for m in laws() {
            let s = m.to_string();
            let back: DisorderModel = s.parse().unwrap();
            if let (Some(a), Some(b)) = (m.atoms(), back.atoms()) {
                for (x, y) in a.iter().zip(&b) {
                    assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
                }
            } else {
                assert_eq!(m, back);
            }
        }
        assert!("cauchy".parse::<DisorderModel>().is_err());
        assert!("bernoulli:1.5".parse::<DisorderModel>().is_err());
        assert!("discrete:1,1".parse::<DisorderModel>().is_err());
    }

    #[test]
    fn finite_laws_are_standardised() {
        for m in laws().into_iter().skip(1) {
            let a = m.atoms().unwrap();
            let mean: f64 = a.iter().map(|(v, w)| v * w).sum();
            let var: f64 = a.iter().map(|(v, w)| v * v * w).sum();
            assert!(mean.abs() < 1e-14 && (var - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn xi_examples() {
        let g = DisorderModel::Gaussian;
        for b in [0.1, 0.5, 1.0] {
            assert!((g.xi_variance(b) - (b * b).exp_m1()).abs() < 1e-14);
            let k3 = (3.0 * b * b).exp() - 3.0 * (b * b).exp() + 2.0;
            assert!((g.xi_moment(b, 3) - k3).abs() < 1e-13);
        }
        assert_eq!(g.xi_variance(0.0), 0.0);
        let r = g.xi_variance(1e-3).sqrt() / 1e-3;
        assert!((0.99..=1.01).contains(&r));
        // numeric integration of the Gaussian third moment
        let b: f64 = 0.5;
        let f = |w: f64| {
            (b * w - b * b / 2.0).exp_m1().powi(3) * (-w * w / 2.0).exp()
                / (2.0 * std::f64::consts::PI).sqrt()
        };
        let q = adaptive_integral(f, -15.0, 15.0, 1e-15);
        assert!((q - g.xi_moment(b, 3)).abs() < 1e-12);
    }

    #[test]
    fn xi_low_moments_all_laws() {
        for m in laws() {
            for b in [0.0, 0.05, 0.3, 0.7, 1.0] {
                assert_eq!(m.xi_moment(b, 1), 0.0);
                assert!((m.xi_moment(b, 2) - m.xi_variance(b)).abs() < 1e-13);
                if let Some(atoms) = m.atoms() {
                    let lam = m.cgf(b);
                    for k in 2..=6u32 {
                        let direct: f64 = atoms
                            .iter()
                            .map(|&(v, w)| w * (b * v - lam).exp_m1().powi(k as i32))
                            .sum();
                        assert!((direct - m.xi_moment(b, k)).abs() < 1e-13, "{m} b={b} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn calibration_examples() {
        let g = DisorderModel::Gaussian;
        let n = 4096;
        let theta = (n as f64).ln().sqrt();
        let c = calibrate(&g, n, theta, Regime::QuasiCritical).unwrap();
        let target = (1.0 - theta / (n as f64).ln()) / c.r_n;
        assert!((c.beta - target.ln_1p().sqrt()).abs() < 1e-12);
        assert!((c.gap() - theta / (n as f64).ln()).abs() < 1e-12);
        let z = calibrate(&g, n, (n as f64).ln(), Regime::QuasiCritical).unwrap();
        assert_eq!(z.beta, 0.0);
        let w = calibrate(&DisorderModel::Rademacher, n, 1.0, Regime::CriticalWindow).unwrap();
        assert!((w.sigma_sq * w.r_n - (1.0 + 1.0 / (n as f64).ln())).abs() < 1e-12);
        assert!(calibrate(&g, n, 100.0, Regime::QuasiCritical).is_err());
        assert!(calibrate(&DisorderModel::Rademacher, 1, 0.5, Regime::CriticalWindow).is_err());
    }

    #[test]
    fn calibration_is_monotone_in_theta() {
        let m = DisorderModel::Rademacher;
        let betas: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&t| calibrate(&m, 1024, t, Regime::QuasiCritical).unwrap().beta)
            .collect();
        assert!(betas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn quantile_matches_statrs() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for &p in &[1e-300, 1e-20, 1e-8, 0.01, 0.02425, 0.075, 0.3, 0.5, 0.7, 0.925, 0.99, 1.0 - 1e-12] {
            let a = normal_quantile(p);
            let back = n.cdf(a);
            // statrs' cdf carries ~1e-11 relative error in the tails
            assert!((back - p).abs() <= 1e-10 * p.min(1.0 - p), "p={p} back={back:e}");
        }
    }

    #[test]
    fn quantile_reference_values() {
        let table = [
            (1e-20, -9.262340089798405),
            (1e-8, -5.61200124417479),
            (0.01, -2.3263478740408408),
            (0.02425, -1.9729610513118845),
            (0.075, -1.4395314709384557),
            (0.3, -0.5244005127080407),
            (0.5, 0.0),
            (0.925, 1.439531470938456),
            (0.99, 2.3263478740408408),
        ];
        for (p, z) in table {
            assert!((normal_quantile(p) - z).abs() <= 1e-14 * z.abs().max(1.0), "p={p}");
        }
    }

    #[test]
    fn gaussian_weight_table_is_accurate() {
        for beta in [0.05, 0.3, 0.7, 1.0] {
            let lambda = beta * beta / 2.0;
            let t = GaussWeightTable::new(beta, lambda);
            let mut worst = 0.0f64;
            let mut skipped = 0;
            for k in 0..400_000u64 {
                // spread samples over all levels, including the far tails
                let bits = mix64(k) >> (k % 12);
                let w = t.weight_bits(bits);
                let exact = (beta * normal_quantile(unit_open(bits)) - lambda).exp();
                if w.is_nan() {
                    skipped += 1;
                } else {
                    worst = worst.max((w / exact - 1.0).abs());
                }
            }
            assert!(worst < 1e-12, "β={beta}: {worst:e}");
            assert!(skipped > 0);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let addr = SliceAddress { seed: 7, replica: 3, time: 11 };
        for m in laws() {
            let (a, oa) = sample_slice(&m, 0.4, addr, LatticePoint::new(-500, -500), 1000, 1000);
            let (b, ob) = sample_slice(&m, 0.4, addr, LatticePoint::new(-500, -500), 1000, 1000);
            assert_eq!(a, b);
            assert_eq!(oa, ob);
            // sub-window regenerates the same values
            let (c, _) = sample_slice(&m, 0.4, addr, LatticePoint::new(-3, 17), 70, 5);
            for (x, v) in c.iter() {
                assert_eq!(v, a.get(x));
            }
            let n = a.values.len() as f64;
            let sigma = m.xi_variance(0.4).sqrt();
            let mean = a.values.iter().sum::<f64>() / n;
            assert!(mean.abs() < 4.0 * sigma / 1000.0, "{m}: mean {mean}");
            let var = a.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var / sigma.powi(2) - 1.0).abs() < 0.01, "{m}: var {var}");
            for (x, v) in a.iter().take(50) {
                let w = (0.4 * oa.get(x) - m.cgf(0.4)).exp();
                assert!((w - 1.0 - v).abs() < 1e-12 * w);
            }
        }
    }

    #[test]
    fn dismom_gaussian_h4() {
        let r = dismom_constants(&DisorderModel::Gaussian, 0.3, 4);
        assert_eq!(r.partitions_checked, 14);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.sequences_checked > 0);
        let r2 = dismom_constants(&DisorderModel::Rademacher, 0.5, 2);
        assert_eq!(r2.partitions_checked, 1);
        assert!(r2.violations.is_empty());
    }

    #[test]
    fn partition_moment_is_block_product() {
        let m = DisorderModel::Gaussian;
        for h in 2..=5 {
            for p in enumerate_partitions(h).unwrap() {
                if p.is_star() {
                    assert!(m.xi_partition_moment(0.5, &p).is_err());
                    continue;
                }
                let v = m.xi_partition_moment(0.5, &p).unwrap();
                let prod: f64 = p
                    .blocks()
                    .iter()
                    .filter(|b| b.len() > 1)
                    .map(|b| m.xi_moment(0.5, b.len() as u32))
                    .product();
                assert_eq!(v, prod);
            }
        }
    }
}
