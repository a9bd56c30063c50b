//! Exact centred moments of the point-to-point partition function at tiny
//! scale: the partition-indexed expansion and an independent path oracle.

use std::collections::BTreeMap;

use serde::Serialize;

use super::partitions::{enumerate_partitions, SetPartition};
use super::MomentError;
use crate::disorder::DisorderModel;
use crate::field::{Field, LatticePoint};
use crate::numerics::{csum, CompensatedSum};

/// Maximum number of simultaneous dynamic-programming states.
pub const EXPANSION_STATE_BUDGET: usize = 10_000_000;
/// Maximum number of enumerated path tuples (4^{Lh} times the start tuples).
pub const ORACLE_TUPLE_BUDGET: u128 = 1 << 26;

const STEPS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const NO_PARTITION: u8 = u8::MAX;

/// Result of the exact expansion, with the contribution of each number r of
/// distinct consecutive partitions.
#[derive(Debug, Clone, Serialize)]
pub struct MomentExpansion {
    pub h: usize,
    pub l: usize,
    pub value: f64,
    /// `per_r[r - 1]` is the contribution of sequences with r runs.
    pub per_r: Vec<f64>,
    pub peak_states: usize,
}

fn pack(pos: &[LatticePoint]) -> u128 {
    pos.iter().enumerate().fold(0u128, |acc, (i, p)| {
        let a = (p.x1 as i16 as u16) as u128;
        let b = (p.x2 as i16 as u16) as u128;
        acc | (a << (32 * i)) | (b << (32 * i + 16))
    })
}

fn unpack(key: u128, h: usize) -> Vec<LatticePoint> {
    (0..h)
        .map(|i| {
            let a = ((key >> (32 * i)) & 0xffff) as u16 as i16 as i64;
            let b = ((key >> (32 * i + 16)) & 0xffff) as u16 as i16 as i64;
            LatticePoint::new(a, b)
        })
        .collect()
}

fn check_horizon(l: usize, h: usize, f: &Field) -> Result<(), MomentError> {
    if l == 0 {
        return Err(MomentError::Precondition("horizon L must be at least 1".into()));
    }
    if !(2..=4).contains(&h) {
        return Err(MomentError::Precondition(format!("moment order h = {h} outside 2..=4")));
    }
    let reach = f
        .support()
        .map(|(p, _)| p.x1.abs().max(p.x2.abs()))
        .max()
        .unwrap_or(0)
        + l as i64;
    if reach > i16::MAX as i64 / 2 {
        return Err(MomentError::Precondition("support too far from the origin".into()));
    }
    Ok(())
}

/// All h-tuples of support points of `f` with the product of their values.
fn start_tuples(f: &Field, h: usize) -> Vec<(Vec<LatticePoint>, f64)> {
    let supp: Vec<(LatticePoint, f64)> = f.support().collect();
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..h {
        out = out
            .into_iter()
            .flat_map(|(pos, w)| {
                supp.iter().map(move |&(p, v)| {
                    let mut next = pos.clone();
                    next.push(p);
                    (next, w * v)
                })
            })
            .collect();
    }
    out
}

/// Centred moment E[(𝒵 − E𝒵)^h] of 𝒵_{L,β}(f,g) by the partition expansion.
///
/// A time step moves every replica freely; at times 1..L−1 the replicas that
/// pick up a ξ factor form a partition J ≠ * with x ∼ J, weighted by E[ξ^J].
/// Runs of equal consecutive partitions make up the Green's kernels, so the
/// number of runs r is tracked, and only fully supported sequences count.
pub fn moment_expansion_exact(
    l: usize,
    model: &DisorderModel,
    beta: f64,
    f: &Field,
    g: &Field,
    h: usize,
) -> Result<MomentExpansion, MomentError> {
    check_horizon(l, h, f)?;
    let parts: Vec<SetPartition> = enumerate_partitions(h)?
        .into_iter()
        .filter(|p| !p.is_star())
        .collect();
    let constraints: Vec<Vec<(usize, usize, bool)>> = parts.iter().map(|p| p.constraints()).collect();
    let masks: Vec<u16> = parts.iter().map(|p| p.support_mask() as u16).collect();
    let moments: Vec<f64> = parts
        .iter()
        .map(|p| model.xi_partition_moment(beta, p))
        .collect::<Result<_, _>>()?;
    let full = ((1u32 << h) - 1) as u16;

    type Key = (u128, u16, u8, u8);
    let mut states: BTreeMap<Key, f64> = BTreeMap::new();
    let starts = start_tuples(f, h);
    if starts.len() > EXPANSION_STATE_BUDGET {
        return Err(MomentError::Budget {
            what: "start tuples",
            size: starts.len() as u128,
            limit: EXPANSION_STATE_BUDGET as u128,
        });
    }
    for (pos, w) in starts {
        *states.entry((pack(&pos), 0, NO_PARTITION, 0)).or_default() += w;
    }
    let mut peak = states.len();
    let step_weight = 0.25f64.powi(h as i32);
    let n_moves = 4usize.pow(h as u32);

    for n in 1..=l {
        let mut moved: BTreeMap<Key, f64> = BTreeMap::new();
        for (&(key, mask, last, r), &w) in &states {
            let pos = unpack(key, h);
            let mut next = pos.clone();
            for mv in 0..n_moves {
                let mut code = mv;
                for i in 0..h {
                    let (d1, d2) = STEPS[code % 4];
                    code /= 4;
                    next[i] = LatticePoint::new(pos[i].x1 + d1, pos[i].x2 + d2);
                }
                *moved.entry((pack(&next), mask, last, r)).or_default() += w * step_weight;
            }
            if moved.len() > EXPANSION_STATE_BUDGET {
                return Err(MomentError::Budget {
                    what: "expansion states",
                    size: moved.len() as u128,
                    limit: EXPANSION_STATE_BUDGET as u128,
                });
            }
        }
        if n == l {
            states = moved;
            break;
        }
        let mut branched: BTreeMap<Key, f64> = BTreeMap::new();
        for (&(key, mask, last, r), &w) in &moved {
            *branched.entry((key, mask, last, r)).or_default() += w;
            let pos = unpack(key, h);
            for (k, cons) in constraints.iter().enumerate() {
                if cons.iter().all(|&(a, b, eq)| (pos[a] == pos[b]) == eq) {
                    let r_next = if last == k as u8 { r } else { r + 1 };
                    *branched
                        .entry((key, mask | masks[k], k as u8, r_next))
                        .or_default() += w * moments[k];
                }
            }
            if branched.len() > EXPANSION_STATE_BUDGET {
                return Err(MomentError::Budget {
                    what: "expansion states",
                    size: branched.len() as u128,
                    limit: EXPANSION_STATE_BUDGET as u128,
                });
            }
        }
        states = branched;
        peak = peak.max(states.len());
    }

    let mut per_r = vec![CompensatedSum::new(); l.saturating_sub(1)];
    for (&(key, mask, _, r), &w) in &states {
        if mask != full || r == 0 {
            continue;
        }
        let gw: f64 = unpack(key, h).iter().map(|&x| g.get(x)).product();
        per_r[r as usize - 1].add(w * gw);
    }
    let per_r: Vec<f64> = per_r.iter().map(CompensatedSum::value).collect();
    Ok(MomentExpansion {
        h,
        l,
        value: csum(per_r.iter().copied()),
        per_r,
        peak_states: peak,
    })
}

/// Brute-force centred moment from all j-tuples of nearest-neighbour paths,
/// j ≤ h, combined by the binomial expansion of (𝒵 − E𝒵)^h.
pub fn path_oracle_moment(
    l: usize,
    model: &DisorderModel,
    beta: f64,
    f: &Field,
    g: &Field,
    h: usize,
) -> Result<f64, MomentError> {
    check_horizon(l, h, f)?;
    let supp = f.support().count() as u128;
    let tuples = 4u128.pow((l * h) as u32) * supp.pow(h as u32);
    if tuples > ORACLE_TUPLE_BUDGET {
        return Err(MomentError::Budget {
            what: "path tuples",
            size: tuples,
            limit: ORACLE_TUPLE_BUDGET,
        });
    }
    let lam = model.cgf(beta);
    // ratio[k] = e^{c(k+1) − c(k)} with c(k) = λ(kβ) − kλ(β).
    let c = |k: usize| model.cgf(k as f64 * beta) - k as f64 * lam;
    let ratio: Vec<f64> = (0..h).map(|k| (c(k + 1) - c(k)).exp()).collect();

    let raw: Vec<f64> = (0..=h)
        .map(|j| if j == 0 { 1.0 } else { raw_moment(l, j, f, g, &ratio) })
        .collect();
    let mean = raw[1];
    let mut acc = CompensatedSum::new();
    for (j, &m) in raw.iter().enumerate() {
        acc.add(binomial(h, j) * m * (-mean).powi((h - j) as i32));
    }
    Ok(acc.value())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64) as f64
}

/// E[𝒵^j] by enumerating j-tuples of paths.
fn raw_moment(l: usize, j: usize, f: &Field, g: &Field, ratio: &[f64]) -> f64 {
    struct Walk<'a> {
        l: usize,
        j: usize,
        g: &'a Field,
        ratio: &'a [f64],
        acc: CompensatedSum,
    }
    impl Walk<'_> {
        fn time(&mut self, n: usize, pos: &mut [LatticePoint], w: f64) {
            if n == self.l {
                let gw: f64 = pos.iter().map(|&x| self.g.get(x)).product();
                self.acc.add(w * gw);
                return;
            }
            self.walker(n, 0, pos, w);
        }

        fn walker(&mut self, n: usize, i: usize, pos: &mut [LatticePoint], w: f64) {
            if i == self.j {
                self.time(n + 1, pos, w);
                return;
            }
            let here = pos[i];
            for &(d1, d2) in &STEPS {
                let x = LatticePoint::new(here.x1 + d1, here.x2 + d2);
                pos[i] = x;
                let mut wi = w * 0.25;
                // Disorder acts at times 1..L−1; n + 1 is the time just reached.
                if n + 1 < self.l {
                    let k = pos[..i].iter().filter(|&&y| y == x).count();
                    wi *= self.ratio[k];
                }
                self.walker(n, i + 1, pos, wi);
            }
            pos[i] = here;
        }
    }

    let mut walk = Walk {
        l,
        j,
        g,
        ratio,
        acc: CompensatedSum::new(),
    };
    for (mut pos, w) in start_tuples(f, j) {
        walk.time(0, &mut pos, w);
    }
    walk.acc.value()
}
