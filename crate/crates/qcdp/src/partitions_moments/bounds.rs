//! Moment upper bounds from boundary and bulk operator estimates, the
//! fourth-moment pipeline for the time blocks of X_N, and numeric checks of
//! the Green's function and weight-sum inequalities used along the way.

use serde::Serialize;

use super::partitions::{enumerate_partitions, SetPartition};
use super::MomentError;
use crate::disorder::{Calibration, DisorderModel};
use crate::field::{Field, LatticePoint};
use crate::lattice_rw::{laplace_overlap, return_probabilities, transition_prob};
use crate::numerics::{csum, log_add_exp};

/// Explicit constants of the boundary and bulk estimates.
#[derive(Debug, Clone, Serialize)]
pub struct BoundConstants {
    /// Random-walk constant 𝖼.
    pub c: f64,
    /// 𝒞 = 𝖼 e^{2𝖼t²L}.
    pub cal_c: f64,
    /// C̄ = 5000π𝖼² e^{4𝖼t²L}.
    pub c_bar: f64,
    /// Ĉ = 4000𝖼² e^{8𝖼t²L}.
    pub c_hat: f64,
    /// Ĉ̂ = 4000𝖼² e^{8𝖼(t+2s)²L}.
    pub c_hat_hat: f64,
    /// Č = 2 e^{4𝖼t²L}.
    pub c_check: f64,
    /// Č̌ = 2 e^{4𝖼(t+s)²L}.
    pub c_check_check: f64,
    /// C₁ = 2^{2h}(1+π)^h.
    pub c1: f64,
    /// C₂ = h!(200𝖼²)^h.
    pub c2: f64,
}

impl BoundConstants {
    /// Constants from the exponents t²L, (t+s)²L and (t+2s)²L.
    pub fn from_exponents(c: f64, h: usize, t2l: f64, ts2l: f64, t2s2l: f64) -> Self {
        let hf = h as i32;
        Self {
            c,
            cal_c: c * (2.0 * c * t2l).exp(),
            c_bar: 5000.0 * std::f64::consts::PI * c * c * (4.0 * c * t2l).exp(),
            c_hat: 4000.0 * c * c * (8.0 * c * t2l).exp(),
            c_hat_hat: 4000.0 * c * c * (8.0 * c * t2s2l).exp(),
            c_check: 2.0 * (4.0 * c * t2l).exp(),
            c_check_check: 2.0 * (4.0 * c * ts2l).exp(),
            c1: 4f64.powi(hf) * (1.0 + std::f64::consts::PI).powi(hf),
            c2: factorial(h) * (200.0 * c * c).powi(hf),
        }
    }
}

fn factorial(h: usize) -> f64 {
    (1..=h).map(|k| k as f64).product()
}

/// Weight rates, Laplace rate, Hölder exponent and the derived constants.
#[derive(Debug, Clone, Serialize)]
pub struct WeightSpec {
    /// Rate of the spatial weight 𝒲_t.
    pub t: f64,
    /// Rate of the pair weight 𝒱_s.
    pub s: f64,
    pub lambda: f64,
    /// Exponent q of the ℓ^q norms; p = q/(q−1).
    pub q: f64,
    pub l: usize,
    pub h: usize,
    pub constants: BoundConstants,
}

impl WeightSpec {
    /// Constants evaluated at the given t, s and horizon L.
    pub fn new(c: f64, t: f64, s: f64, lambda: f64, q: f64, l: usize, h: usize) -> Result<Self, MomentError> {
        if !(t > 0.0 && s > 0.0 && lambda >= 0.0 && q > 1.0 && q.is_finite() && c >= 1.0) {
            return Err(MomentError::Precondition(format!(
                "weight spec needs t, s > 0, λ ≥ 0, 1 < q < ∞ and 𝖼 ≥ 1 (t={t}, s={s}, λ={lambda}, q={q}, c={c})"
            )));
        }
        let lf = l as f64;
        let constants = BoundConstants::from_exponents(
            c,
            h,
            t * t * lf,
            (t + s).powi(2) * lf,
            (t + 2.0 * s).powi(2) * lf,
        );
        Ok(Self {
            t,
            s,
            lambda,
            q,
            l,
            h,
            constants,
        })
    }

    pub fn p(&self) -> f64 {
        self.q / (self.q - 1.0)
    }
}

/// Norms ‖f/w_t‖_∞ and ‖f/w_t‖_p with w_t(x) = e^{−t|x|}.
pub fn weighted_norms(f: &Field, t: f64, p: f64) -> (f64, f64) {
    let vals: Vec<f64> = f
        .support()
        .map(|(x, v)| v.abs() * (t * x.norm()).exp())
        .collect();
    let inf = vals.iter().fold(0.0f64, |m, &v| m.max(v));
    let lp = csum(vals.iter().map(|v| v.powf(p))).powf(1.0 / p);
    (inf, lp)
}

/// Σ_{m=1}^{L} e^{−λm} U_m for the scalar renewal with parameter ρ.
pub fn renewal_laplace_sum(rho: f64, l: usize, lambda: f64) -> f64 {
    let q = return_probabilities(l);
    let mut u = vec![0.0; l + 1];
    for m in 1..=l {
        let conv = csum((1..m).map(|j| q[j] * u[m - j]));
        u[m] = rho * (q[m] + conv);
    }
    csum((1..=l).map(|m| (-lambda * m as f64).exp() * u[m]))
}

/// ln S(r), r = 1..=r_max, where S(r) sums Π|E ξ^{I_i}| over admissible
/// full-support sequences of r non-star partitions.
pub fn ln_sequence_sums(abs_moments: &[f64], masks: &[u32], h: usize, r_max: usize) -> Vec<f64> {
    let np = abs_moments.len();
    let nm = 1usize << h;
    let full = nm - 1;
    let mut out = Vec::with_capacity(r_max);
    if r_max == 0 {
        return out;
    }
    let mut cur = vec![0.0f64; np * nm];
    for k in 0..np {
        cur[k * nm + masks[k] as usize] += abs_moments[k];
    }
    let mut ln_scale = 0.0f64;
    for r in 1..=r_max {
        if r > 1 {
            let mut next = vec![0.0f64; np * nm];
            let col: Vec<f64> = (0..nm).map(|m| (0..np).map(|k| cur[k * nm + m]).sum()).collect();
            for k2 in 0..np {
                for m in 0..nm {
                    let from_others = col[m] - cur[k2 * nm + m];
                    if from_others != 0.0 {
                        next[k2 * nm + (m | masks[k2] as usize)] += from_others * abs_moments[k2];
                    }
                }
            }
            cur = next;
        }
        let total: f64 = (0..np).map(|k| cur[k * nm + full]).sum();
        out.push(if total > 0.0 { total.ln() + ln_scale } else { f64::NEG_INFINITY });
        let mx = cur.iter().fold(0.0f64, |m, &v| m.max(v));
        if mx > 0.0 {
            cur.iter_mut().for_each(|v| *v /= mx);
            ln_scale += mx.ln();
        }
    }
    out
}

fn ln_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, log_add_exp)
}

/// Non-star partitions with their absolute disorder moments.
struct PartitionData {
    parts: Vec<SetPartition>,
    abs_moments: Vec<f64>,
    masks: Vec<u32>,
}

impl PartitionData {
    fn new(model: &DisorderModel, beta: f64, h: usize) -> Result<Self, MomentError> {
        let parts: Vec<SetPartition> = enumerate_partitions(h)?
            .into_iter()
            .filter(|p| !p.is_star())
            .collect();
        let abs_moments = parts
            .iter()
            .map(|p| model.xi_partition_moment(beta, p).map(f64::abs))
            .collect::<Result<Vec<_>, _>>()?;
        let masks = parts.iter().map(SetPartition::support_mask).collect();
        Ok(Self {
            parts,
            abs_moments,
            masks,
        })
    }

    fn max_abs(&self) -> f64 {
        self.abs_moments.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Bulk interacting estimate 1 + Č^h·G with G the geometric renewal bound
/// ρR/(1−ρR), or the exact finite renewal sum when ρR ≥ 1.
fn bulk_interacting(c_check: f64, h: usize, rho: f64, l: usize, lambda: f64) -> (f64, f64, bool) {
    let x = rho * laplace_overlap(l, lambda);
    if x < 1.0 {
        (1.0 + c_check.powi(h as i32) * x / (1.0 - x), x, false)
    } else {
        let g = renewal_laplace_sum(rho, l, lambda);
        (1.0 + c_check.powi(h as i32) * g, x, true)
    }
}

/// Boundary and bulk quantities of the moment bound and the assembled bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundComponents {
    pub h: usize,
    pub l: usize,
    pub p: f64,
    pub q: f64,
    /// ‖f/w_t‖_∞ and ‖f/w_t‖_p.
    pub f_inf: f64,
    pub f_p: f64,
    /// Left boundary with one ℓ^∞ factor and linear growth in L.
    pub left_inf: f64,
    /// Left boundary with all factors in ℓ^p.
    pub left_p: f64,
    /// Left boundary with the pair weight 𝒱_s (h ≥ 3).
    pub left_plus: Option<f64>,
    pub right: f64,
    /// Right boundary with the pair weight 𝒱_s (h ≥ 3).
    pub right_plus: Option<f64>,
    /// Bulk random-walk norm and its 𝒱_s-weighted version.
    pub q_hat: f64,
    pub q_hat_v: f64,
    /// Bulk interacting norm and its 𝒱_s-weighted version.
    pub u_hat: f64,
    pub u_hat_v: f64,
    /// max(σ², max_I |E ξ^I|), the renewal parameter of the interacting bound.
    pub rho: f64,
    pub sigma_sq: f64,
    /// ρ R_L^{(λ)}.
    pub overlap: f64,
    /// The exact finite renewal sum replaced the geometric series.
    pub renewal_fallback: bool,
    /// max_I |E ξ^I| < σ², the hypothesis of the closed-form interacting bound.
    pub moments_below_variance: bool,
    pub max_abs_moment: f64,
    /// Number of non-star partitions c(h).
    pub nonstar: usize,
    /// c(h)·max|E ξ^I|·Q̂·Û, the geometric ratio between consecutive r.
    pub ratio: f64,
    /// ln Ξ^bulk(r) for r = 1..=L−1.
    pub ln_xi_bulk: Vec<f64>,
    /// ln of e^{λL}·left·right·Σ_r Ξ^bulk(r).
    pub ln_bound: f64,
    pub bound: f64,
}

/// Evaluate the boundary and bulk estimates for 𝒵_{L,β}(f,g) and assemble
/// the bound on |E[(𝒵 − E𝒵)^h]|.
///
/// Every term with r ≥ L vanishes in the exact expansion, so the sum over r
/// stops at L−1 and needs no geometric remainder.
pub fn boundary_bulk_bounds(
    l: usize,
    model: &DisorderModel,
    beta: f64,
    f: &Field,
    g: &Field,
    h: usize,
    w: &WeightSpec,
) -> Result<BoundComponents, MomentError> {
    if l == 0 || h < 2 || w.h != h || w.l != l {
        return Err(MomentError::Precondition(format!(
            "weight spec (L={}, h={}) does not match L={l}, h={h}",
            w.l, w.h
        )));
    }
    let data = PartitionData::new(model, beta, h)?;
    let k = &w.constants;
    let (p, q) = (w.p(), w.q);
    let lf = l as f64;
    let hi = h as i32;
    let (f_inf, f_p) = weighted_norms(f, w.t, p);
    let g_inf = g.sup_norm();

    let left_inf = 4.0 * k.cal_c.powi(hi) * lf * f_inf * f_p.powi(hi - 1);
    let left_p = 4.0 * k.cal_c.powi(hi) * q * lf.powf(1.0 - 1.0 / p) * f_p.powi(hi);
    let left_plus = (h >= 3).then(|| {
        36f64.powf(1.0 / p) * k.cal_c.powi(hi) * lf / w.s.powf(2.0 / p) * f_inf.powi(2) * f_p.powi(hi - 2)
    });
    let right_factor = p * (36f64.powf(1.0 / q) * k.c_bar).powi(hi) * g_inf.powi(hi);
    let right = right_factor / w.t.powf(2.0 / q * (h - 1) as f64);
    let right_plus = (h >= 3)
        .then(|| right_factor / (w.s.powf(2.0 / q) * w.t.powf(2.0 / q * (h - 2) as f64)));
    let q_hat = factorial(h) * k.c_hat.powi(hi) * q * p;
    let q_hat_v = factorial(h) * k.c_hat_hat.powi(hi) * q * p;

    let sigma_sq = model.xi_variance(beta);
    let max_abs = data.max_abs();
    let rho = sigma_sq.max(max_abs);
    let (u_hat, overlap, fallback) = bulk_interacting(k.c_check, h, rho, l, w.lambda);
    let (u_hat_v, _, _) = bulk_interacting(k.c_check_check, h, rho, l, w.lambda);

    let r_max = l.saturating_sub(1);
    let ln_s = ln_sequence_sums(&data.abs_moments, &data.masks, h, r_max);
    let ln_xi_bulk: Vec<f64> = ln_s
        .iter()
        .enumerate()
        .map(|(i, &s)| s + i as f64 * q_hat.ln() + (i + 1) as f64 * u_hat.ln())
        .collect();
    let left = left_inf.min(left_p);
    let ln_bound = w.lambda * lf + left.ln() + right.ln() + ln_sum(ln_xi_bulk.iter().copied());
    let ratio = data.parts.len() as f64 * max_abs * q_hat * u_hat;

    Ok(BoundComponents {
        h,
        l,
        p,
        q,
        f_inf,
        f_p,
        left_inf,
        left_p,
        left_plus,
        right,
        right_plus,
        q_hat,
        q_hat_v,
        u_hat,
        u_hat_v,
        rho,
        sigma_sq,
        overlap,
        renewal_fallback: fallback,
        moments_below_variance: max_abs <= sigma_sq,
        max_abs_moment: max_abs,
        nonstar: data.parts.len(),
        ratio,
        ln_xi_bulk,
        ln_bound,
        bound: ln_bound.exp(),
    })
}

/// How the weight constants of the fourth-moment pipeline are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantsMode {
    /// Majorants uniform in M: t²L ≤ 1, (t+s)²L ≤ 4, (t+2s)²L ≤ 9.
    Uniform,
    /// Exact exponents for the given N and M.
    Exact,
}

/// Fourth-moment bound for X^{(i)}_{N,M} and its components, all scaled by
/// θ²/N⁴ and given as base-10 logarithms.
#[derive(Debug, Clone, Serialize)]
pub struct FourthMomentBound {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    pub l: usize,
    pub theta: f64,
    pub sigma_sq: f64,
    pub t: f64,
    pub s: f64,
    pub mode: ConstantsMode,
    pub constants: BoundConstants,
    /// ‖f/w_t‖_∞ and ‖f/w_t‖_2 for f = q^{φ_N}_{(i−1)L}.
    pub f_inf: f64,
    pub f_2: f64,
    pub left: f64,
    pub left_plus: f64,
    pub right: f64,
    pub right_plus: f64,
    pub q_hat: f64,
    pub q_hat_v: f64,
    pub u_hat: f64,
    pub u_hat_v: f64,
    pub overlap: f64,
    pub renewal_fallback: bool,
    pub ratio: f64,
    /// Number of ordered pairs (I₁, I₂) of distinct pairs with full support.
    pub pair_sequences: usize,
    pub log10_xi1: f64,
    pub log10_xi2_pairs: f64,
    pub log10_xi2_others: f64,
    pub log10_tail: f64,
    pub log10_bound: f64,
}

impl FourthMomentBound {
    pub fn bound(&self) -> f64 {
        10f64.powf(self.log10_bound)
    }
}

/// Bound E[(X^{(i)}_{N,M})⁴] ≤ θ²/N⁴·(Ξ(1) + Ξ_pairs(2) + Ξ_others(2) + Σ_{r≥3}Ξ(r))
/// with p = q = 2, λ = 0, t = 1/√N, s = √(M/N), L = N/M, g ≡ 1 and
/// f = q^{φ_N}_{(i−1)N/M}, whose weighted norms are controlled from those of φ_N.
pub fn fourth_moment_bound_pipeline(
    n: usize,
    m: usize,
    i: usize,
    cal: &Calibration,
    phi_n: &Field,
    c: f64,
    mode: ConstantsMode,
) -> Result<FourthMomentBound, MomentError> {
    if m == 0 || !n.is_multiple_of(m) {
        return Err(MomentError::NotDivisible { n, m });
    }
    if i == 0 || i > m {
        return Err(MomentError::BlockIndex { i, m });
    }
    if cal.gap() <= 0.0 {
        return Err(MomentError::Precondition(format!(
            "σ²R_N = {} is not below 1",
            cal.sigma_sq * cal.r_n
        )));
    }
    let h = 4usize;
    let l = n / m;
    let (nf, lf) = (n as f64, l as f64);
    let t = 1.0 / nf.sqrt();
    let s = (m as f64 / nf).sqrt();
    let constants = match mode {
        ConstantsMode::Uniform => BoundConstants::from_exponents(c, h, 1.0, 4.0, 9.0),
        ConstantsMode::Exact => {
            BoundConstants::from_exponents(c, h, t * t * lf, (t + s).powi(2) * lf, (t + 2.0 * s).powi(2) * lf)
        }
    };
    let k = &constants;
    let data = PartitionData::new(&cal.model, cal.beta, h)?;

    let (phi_inf, phi_2) = weighted_norms(phi_n, t, 2.0);
    let evolve = if i == 1 {
        1.0
    } else {
        let e = match mode {
            ConstantsMode::Uniform => 1.0,
            ConstantsMode::Exact => t * t * ((i - 1) * l) as f64,
        };
        c * (2.0 * c * e).exp()
    };
    let (f_inf, f_2) = (evolve * phi_inf, evolve * phi_2);

    let left = 4.0 * k.cal_c.powi(4) * lf * f_inf * f_2.powi(3);
    let left_plus = 6.0 * k.cal_c.powi(4) * lf / s * f_inf.powi(2) * f_2.powi(2);
    let right = 2.0 * (6.0 * k.c_bar).powi(4) / t.powi(3);
    let right_plus = 2.0 * (6.0 * k.c_bar).powi(4) / (s * t * t);
    let q_hat = 24.0 * k.c_hat.powi(4) * 4.0;
    let q_hat_v = 24.0 * k.c_hat_hat.powi(4) * 4.0;
    let rho = cal.sigma_sq.max(data.max_abs());
    let (u_hat, overlap, fallback) = bulk_interacting(k.c_check, h, rho, l, 0.0);
    let (u_hat_v, _, _) = bulk_interacting(k.c_check_check, h, rho, l, 0.0);

    let ln_pre = (cal.theta * cal.theta / nf.powi(4)).ln();
    let ln_lr = left.ln() + right.ln();
    let ln_s = ln_sequence_sums(&data.abs_moments, &data.masks, h, l.saturating_sub(1));

    let ln_xi1 = ln_s.first().map_or(f64::NEG_INFINITY, |s| ln_pre + ln_lr + s + u_hat.ln());

    // Split Ξ(2) into sequences of two pairs and the rest.
    let np = data.parts.len();
    let full = (1u32 << h) - 1;
    let mut pair_seq = 0usize;
    let mut pair_weight = Vec::new();
    let mut other_weight = Vec::new();
    for a in 0..np {
        for b in 0..np {
            if a == b || data.masks[a] | data.masks[b] != full {
                continue;
            }
            let wgt = data.abs_moments[a] * data.abs_moments[b];
            if data.parts[a].is_pair() && data.parts[b].is_pair() {
                pair_seq += 1;
                pair_weight.push(wgt);
            } else {
                other_weight.push(wgt);
            }
        }
    }
    let ln_xi2_pairs = if l >= 3 {
        ln_pre
            + csum(pair_weight).ln()
            + left_plus.ln()
            + 2.0 * u_hat_v.ln()
            + q_hat_v.ln()
            + right_plus.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ln_xi2_others = if l >= 3 {
        ln_pre + ln_lr + csum(other_weight).ln() + q_hat.ln() + 2.0 * u_hat.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ln_tail = ln_sum(
        ln_s.iter()
            .enumerate()
            .skip(2)
            .map(|(r0, &sr)| ln_pre + ln_lr + sr + r0 as f64 * q_hat.ln() + (r0 + 1) as f64 * u_hat.ln()),
    );
    let ln_bound = ln_sum([ln_xi1, ln_xi2_pairs, ln_xi2_others, ln_tail]);
    let to10 = |x: f64| x / std::f64::consts::LN_10;

    Ok(FourthMomentBound {
        n,
        m,
        i,
        l,
        theta: cal.theta,
        sigma_sq: cal.sigma_sq,
        t,
        s,
        mode,
        constants: constants.clone(),
        f_inf,
        f_2,
        left,
        left_plus,
        right,
        right_plus,
        q_hat,
        q_hat_v,
        u_hat,
        u_hat_v,
        overlap,
        renewal_fallback: fallback,
        ratio: np as f64 * data.max_abs() * q_hat * u_hat,
        pair_sequences: pair_seq,
        log10_xi1: to10(ln_xi1),
        log10_xi2_pairs: to10(ln_xi2_pairs),
        log10_xi2_others: to10(ln_xi2_others),
        log10_tail: to10(ln_tail),
        log10_bound: to10(ln_bound),
    })
}

/// One evaluated point of the Green's function bound.
#[derive(Debug, Clone, Serialize)]
pub struct GreenRow {
    /// Displacement x − z, one lattice point per copy.
    pub displacement: Vec<LatticePoint>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenReport {
    pub l: usize,
    pub h: usize,
    pub c: f64,
    pub c2: f64,
    pub points: usize,
    pub max_ratio: f64,
    /// Q̂(z,z) ≤ 2(6𝖼)^h.
    pub diagonal_ok: bool,
    pub violations: Vec<GreenRow>,
}

/// Check Σ_{n≤L} Π_i q_n(x^i − z^i) ≤ C₂ e^{−|x−z|²/(16𝖼L)}/(1+|x−z|²)^{h−1}
/// for every displacement with coordinates in [−window, window].
pub fn green_bound_check(l: usize, h: usize, window: i64, c: f64) -> Result<GreenReport, MomentError> {
    if !(1..=3).contains(&h) || l == 0 || window < 0 {
        return Err(MomentError::Precondition(format!(
            "Green's bound check needs 1 ≤ h ≤ 3 and L ≥ 1 (h={h}, L={l})"
        )));
    }
    let side = (2 * window + 1) as usize;
    let cells = side * side;
    let c2 = factorial(h) * (200.0 * c * c).powi(h as i32);
    let mut violations = Vec::new();
    let mut max_ratio = 0.0f64;
    let mut diagonal_ok = true;
    let total = cells.pow(h as u32);
    let point = |k: usize| LatticePoint::new((k % side) as i64 - window, (k / side) as i64 - window);
    for idx in 0..total {
        let mut code = idx;
        let d: Vec<LatticePoint> = (0..h)
            .map(|_| {
                let p = point(code % cells);
                code /= cells;
                p
            })
            .collect();
        let lhs = csum((1..=l as u64).map(|n| d.iter().map(|&x| transition_prob(n, x)).product::<f64>()));
        let r2: f64 = d.iter().map(|x| x.norm_sq() as f64).sum();
        let rhs = c2 * (-r2 / (16.0 * c * l as f64)).exp() / (1.0 + r2).powi(h as i32 - 1);
        let pass = lhs <= rhs * (1.0 + 1e-12);
        if r2 == 0.0 {
            diagonal_ok &= lhs <= 2.0 * (6.0 * c).powi(h as i32);
        }
        if lhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
        if !pass {
            violations.push(GreenRow {
                displacement: d,
                lhs,
                rhs,
                pass,
            });
        }
    }
    Ok(GreenReport {
        l,
        h,
        c,
        c2,
        points: total,
        max_ratio,
        diagonal_ok,
        violations,
    })
}

/// Σ_{z∈ℤ²} e^{−a|z|} for a > 0: direct sum over the square of half-width R
/// plus an upper bound for the rest, so the value is an upper bound of the
/// exact sum that is tight to ~1e−12 relative.
pub fn exp_weight_sum(a: f64) -> f64 {
    let r = (40.0 / a).ceil() as i64;
    let mut rows = Vec::with_capacity((2 * r + 1) as usize);
    for x1 in -r..=r {
        rows.push(csum((-r..=r).map(|x2| (-a * LatticePoint::new(x1, x2).norm()).exp())));
    }
    // Points outside the square have sup-norm k > R, at most 8k of them, each
    // with |z| ≥ k: bound by Σ_{k>R} 8k e^{−ak}.
    let q = (-a).exp();
    let rf = r as f64;
    let tail = 8.0 * q.powf(rf + 1.0) * ((rf + 1.0) - rf * q) / (1.0 - q).powi(2);
    csum(rows) + tail
}

/// Check Σ_z e^{−qt|z|} ≤ 36/(qt)² ≤ 36/t² on a grid of rates.
pub fn easybound_check(t_grid: &[f64], q: f64) -> Vec<(f64, f64, f64, bool)> {
    t_grid
        .iter()
        .map(|&t| {
            let lhs = exp_weight_sum(q * t);
            let rhs = 36.0 / (t * t);
            (t, lhs, rhs, lhs <= rhs)
        })
        .collect()
}

/// For h = 2 the pair space is ℤ² and the weighted interacting operator is
/// dominated by 1 + Σ_{m≤L} Σ_x U_m(x) e^{2t|x|}; returns that value and the
/// closed-form estimate 1 + Č²σ²R_L/(1−σ²R_L).
pub fn pair_green_weighted_sum(l: usize, sigma_sq: f64, t: f64, c: f64) -> Result<(f64, f64), MomentError> {
    if l == 0 || l > 16 {
        return Err(MomentError::Precondition(format!("pair Green check needs 1 ≤ L ≤ 16, got {l}")));
    }
    let x = sigma_sq * laplace_overlap(l, 0.0);
    if x >= 1.0 {
        return Err(MomentError::Precondition(format!("σ²R_L = {x} is not below 1")));
    }
    let r = l as i64;
    let side = (2 * r + 1) as usize;
    let idx = |p: LatticePoint| ((p.x2 + r) as usize) * side + (p.x1 + r) as usize;
    let pts: Vec<LatticePoint> = (0..side * side)
        .map(|k| LatticePoint::new((k % side) as i64 - r, (k / side) as i64 - r))
        .collect();
    // sq[m] = q_m(·)², u[m] = U_m(·) on the square of half-width L.
    let sq: Vec<Vec<f64>> = (0..=l)
        .map(|m| pts.iter().map(|&p| transition_prob(m as u64, p).powi(2)).collect())
        .collect();
    let mut u: Vec<Vec<f64>> = vec![vec![0.0; side * side]; l + 1];
    for m in 1..=l {
        let mut cur: Vec<f64> = sq[m].iter().map(|v| sigma_sq * v).collect();
        for j in 1..m {
            for (a, &pa) in pts.iter().enumerate() {
                let qa = sq[j][a];
                if qa == 0.0 {
                    continue;
                }
                for (b, &pb) in pts.iter().enumerate() {
                    let ub = u[m - j][b];
                    if ub == 0.0 {
                        continue;
                    }
                    let s = pa + pb;
                    if s.x1.abs() <= r && s.x2.abs() <= r {
                        cur[idx(s)] += sigma_sq * qa * ub;
                    }
                }
            }
        }
        u[m] = cur;
    }
    let numeric = 1.0
        + csum((1..=l).flat_map(|m| {
            let um = &u[m];
            pts.iter().enumerate().map(move |(k, p)| um[k] * (2.0 * t * p.norm()).exp())
        }));
    let check = 2.0 * (4.0 * c * t * t * l as f64).exp();
    Ok((numeric, 1.0 + check * check * x / (1.0 - x)))
}
