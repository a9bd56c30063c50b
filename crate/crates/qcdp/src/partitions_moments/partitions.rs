//! Set partitions of {1..h}, the matching relation x ∼ I and full-support
//! partition sequences.

use std::fmt;

use serde::{Serialize, Serializer};

use super::MomentError;
use crate::field::LatticePoint;

/// Largest ground set accepted by [`enumerate_partitions`].
pub const MAX_PARTITION_SIZE: usize = 6;

/// A partition of {1..h}; blocks hold 0-based elements, sorted, and blocks are
/// ordered by their minimum element so that equality is structural.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    h: usize,
    blocks: Vec<Vec<usize>>,
}

/// Shape of a partition by the sizes of its non-singleton blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PartitionKind {
    Star,
    Pair,
    DoublePair,
    Triple,
    Quadruple,
    Other,
}

impl SetPartition {
    /// Build from 0-based blocks, checking that they partition {0..h-1}.
    pub fn new(h: usize, blocks: Vec<Vec<usize>>) -> Result<Self, MomentError> {
        let mut seen = vec![false; h];
        for b in &blocks {
            if b.is_empty() {
                return Err(MomentError::InvalidPartition("empty block".into()));
            }
            for &a in b {
                if a >= h || seen[a] {
                    return Err(MomentError::InvalidPartition(format!(
                        "element {} repeated or outside 1..={h}",
                        a + 1
                    )));
                }
                seen[a] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(MomentError::InvalidPartition("blocks do not cover the ground set".into()));
        }
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { h, blocks })
    }

    /// The all-singletons partition *.
    pub fn star(h: usize) -> Self {
        Self {
            h,
            blocks: (0..h).map(|a| vec![a]).collect(),
        }
    }

    /// The partition {{a,b}, singletons} for 0-based a ≠ b.
    pub fn pair(h: usize, a: usize, b: usize) -> Result<Self, MomentError> {
        let mut blocks = vec![vec![a, b]];
        blocks.extend((0..h).filter(|&c| c != a && c != b).map(|c| vec![c]));
        Self::new(h, blocks)
    }

    /// From a restricted growth string: element a lies in block `labels[a]`.
    fn from_labels(labels: &[usize]) -> Self {
        let nb = labels.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); nb];
        for (a, &l) in labels.iter().enumerate() {
            blocks[l].push(a);
        }
        Self {
            h: labels.len(),
            blocks,
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn is_star(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    pub fn is_pair(&self) -> bool {
        self.kind() == PartitionKind::Pair
    }

    /// Sizes of the blocks with at least two elements, in decreasing order.
    pub fn nontrivial_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(Vec::len).filter(|&l| l >= 2).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    pub fn kind(&self) -> PartitionKind {
        match self.nontrivial_sizes().as_slice() {
            [] => PartitionKind::Star,
            [2] => PartitionKind::Pair,
            [2, 2] => PartitionKind::DoublePair,
            [3] => PartitionKind::Triple,
            [4] => PartitionKind::Quadruple,
            _ => PartitionKind::Other,
        }
    }

    /// Bit a is set iff element a lies in a block of size ≥ 2.
    pub fn support_mask(&self) -> u32 {
        self.blocks
            .iter()
            .filter(|b| b.len() >= 2)
            .flatten()
            .fold(0, |m, &a| m | (1 << a))
    }

    /// Index of the block containing each element.
    pub fn labels(&self) -> Vec<usize> {
        let mut l = vec![0; self.h];
        for (k, b) in self.blocks.iter().enumerate() {
            for &a in b {
                l[a] = k;
            }
        }
        l
    }

    /// Every block of `self` containing both ends of the pair `other`.
    pub fn contains_pair_of(&self, other: &SetPartition) -> bool {
        match other.blocks.iter().find(|b| b.len() == 2) {
            Some(p) if other.is_pair() => self
                .blocks
                .iter()
                .any(|b| b.contains(&p[0]) && b.contains(&p[1])),
            _ => false,
        }
    }

    /// Pairwise constraints of x ∼ I: (a, b, must_be_equal).
    pub(crate) fn constraints(&self) -> Vec<(usize, usize, bool)> {
        let labels = self.labels();
        let size = |a: usize| self.blocks[labels[a]].len();
        let mut out = Vec::new();
        for a in 0..self.h {
            for b in a + 1..self.h {
                if labels[a] == labels[b] {
                    out.push((a, b, true));
                } else if size(a) >= 2 && size(b) >= 2 {
                    out.push((a, b, false));
                }
            }
        }
        out
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, a) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", a + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for SetPartition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// All partitions of {1..h} in restricted-growth-string order (star first).
pub fn enumerate_partitions(h: usize) -> Result<Vec<SetPartition>, MomentError> {
    if !(1..=MAX_PARTITION_SIZE).contains(&h) {
        return Err(MomentError::PartitionSize(h));
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; h];
    fn rec(a: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<SetPartition>) {
        if a == labels.len() {
            out.push(SetPartition::from_labels(labels));
            return;
        }
        for l in 0..=max + 1 {
            labels[a] = l;
            rec(a + 1, max.max(l), labels, out);
        }
    }
    rec(1, 0, &mut labels, &mut out);
    // Restricted growth strings put the one-block partition first; list the
    // star first so that index 0 is always *.
    out.sort_by(|a, b| b.blocks.len().cmp(&a.blocks.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// Number of partitions of each kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartitionCounts {
    pub total: usize,
    pub star: usize,
    pub pairs: usize,
    pub double_pairs: usize,
    pub triples: usize,
    pub quadruples: usize,
    pub other: usize,
}

pub fn classify(parts: &[SetPartition]) -> PartitionCounts {
    let mut c = PartitionCounts {
        total: parts.len(),
        ..Default::default()
    };
    for p in parts {
        match p.kind() {
            PartitionKind::Star => c.star += 1,
            PartitionKind::Pair => c.pairs += 1,
            PartitionKind::DoublePair => c.double_pairs += 1,
            PartitionKind::Triple => c.triples += 1,
            PartitionKind::Quadruple => c.quadruples += 1,
            PartitionKind::Other => c.other += 1,
        }
    }
    c
}

/// x ∼ I: coordinates agree inside blocks and differ across distinct blocks
/// of size ≥ 2.
pub fn vector_matches(x: &[LatticePoint], part: &SetPartition) -> Result<bool, MomentError> {
    if x.len() != part.h() {
        return Err(MomentError::Arity {
            expected: part.h(),
            got: x.len(),
        });
    }
    Ok(part
        .constraints()
        .into_iter()
        .all(|(a, b, eq)| (x[a] == x[b]) == eq))
}

/// A sequence of partitions of the same ground set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionSequence(pub Vec<SetPartition>);

impl PartitionSequence {
    /// Every element lies in a block of size ≥ 2 of some member.
    pub fn has_full_support(&self) -> bool {
        match self.0.first() {
            None => false,
            Some(p) => {
                let full = (1u32 << p.h()) - 1;
                self.0.iter().fold(0, |m, q| m | q.support_mask()) == full
            }
        }
    }

    /// No member is * and consecutive members differ.
    pub fn is_admissible(&self) -> bool {
        self.0.iter().all(|p| !p.is_star()) && self.0.windows(2).all(|w| w[0] != w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_partition_lists() {
        let p2 = enumerate_partitions(2).unwrap();
        assert_eq!(p2.len(), 2);
        assert!(p2[0].is_star());
        assert_eq!(p2[1].to_string(), "{{1,2}}");

        let c3 = classify(&enumerate_partitions(3).unwrap());
        assert_eq!((c3.total, c3.star, c3.pairs, c3.triples), (5, 1, 3, 1));

        let c4 = classify(&enumerate_partitions(4).unwrap());
        assert_eq!(
            (c4.total, c4.star, c4.pairs, c4.double_pairs, c4.triples, c4.quadruples, c4.other),
            (15, 1, 6, 3, 4, 1, 0)
        );
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 2, 5, 15, 52, 203];
        for h in 1..=6 {
            assert_eq!(enumerate_partitions(h).unwrap().len(), bell[h - 1]);
        }
        assert!(enumerate_partitions(0).is_err());
        assert!(enumerate_partitions(7).is_err());
    }

    #[test]
    fn matching_examples() {
        let p = LatticePoint::new(0, 0);
        let q = LatticePoint::new(1, 0);
        let dp = SetPartition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(vector_matches(&[p, p, q, q], &dp).unwrap());
        assert!(!vector_matches(&[p, p, p, p], &dp).unwrap());
        assert!(vector_matches(&[p, q, p, q], &SetPartition::star(4)).unwrap());
        let pair = SetPartition::pair(4, 0, 1).unwrap();
        assert!(vector_matches(&[p, p, p, q], &pair).unwrap());
        assert!(vector_matches(&[p], &pair).is_err());
    }

    #[test]
    fn full_support_examples() {
        let a = SetPartition::pair(4, 0, 2).unwrap();
        let b = SetPartition::pair(4, 1, 3).unwrap();
        let seq = PartitionSequence(vec![a.clone(), b.clone()]);
        assert!(seq.has_full_support());
        assert!(seq.is_admissible());
        assert!(!PartitionSequence(vec![a.clone()]).has_full_support());
        assert!(!PartitionSequence(vec![a.clone(), a]).is_admissible());
    }

    #[test]
    fn invalid_partitions_are_rejected() {
        assert!(SetPartition::new(3, vec![vec![0, 1]]).is_err());
        assert!(SetPartition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(SetPartition::new(2, vec![vec![0], vec![], vec![1]]).is_err());
    }
}
