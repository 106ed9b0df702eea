//! Typed mass-partitions and typed partitions of `{1, ..., n}`.
//!
//! Types are labels `1..=k`. Type `0` is reserved: it marks dust in a mass
//! partition and empty blocks or singletons in a block partition. Zero-mass
//! components and empty blocks are never stored, so type `0` only ever shows
//! up on singleton blocks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Type label of a fragment or block. `1..=k` for real types, `0` reserved.
pub type FragmentType = usize;

/// Floating-point slack allowed on `Σ masses ≤ 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("negative or non-finite mass {0}")]
    NegativeMass(f64),
    #[error("type {ty} is out of range 1..={k} for positive mass {mass}")]
    TypeOutOfRange { mass: f64, ty: FragmentType, k: usize },
    #[error("masses sum to {0}, which exceeds 1")]
    MassSumExceedsOne(f64),
    #[error("zero mass carries nonzero type {0}")]
    ZeroMassWithNonzeroType(FragmentType),
    #[error("restriction to an empty set")]
    EmptyGroundSet,
    #[error("ground size mismatch: need at least {expected}, found {found}")]
    GroundSizeMismatch { expected: usize, found: usize },
    #[error("invalid block partition: {0}")]
    InvalidBlocks(String),
}

/// One component `(mass, type)` of a mass-partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub mass: f64,
    pub ty: FragmentType,
}

/// Non-increasing lexicographic order on `(mass, type)`: larger mass first,
/// larger type first among equal masses.
fn lexicographic_desc(a: &Part, b: &Part) -> Ordering {
    b.mass.total_cmp(&a.mass).then(b.ty.cmp(&a.ty))
}

/// A ranked sequence of typed masses with total at most one; the remainder is dust.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedMassPartition {
    parts: Vec<Part>,
    dust: f64,
}

impl TypedMassPartition {
    /// Builds a typed mass-partition from `(mass, type)` pairs with types in `1..=k`.
    ///
    /// Entries `(0, 0)` are dropped. A zero mass with a nonzero type, or a positive
    /// mass with type `0`, violates the convention that mass zero goes with type zero.
    pub fn new<I>(pairs: I, k: usize) -> Result<Self, PartitionError>
    where
        I: IntoIterator<Item = (f64, FragmentType)>,
    {
        let mut parts = Vec::new();
        for (mass, ty) in pairs {
            if !mass.is_finite() || mass < 0.0 {
                return Err(PartitionError::NegativeMass(mass));
            }
            if mass == 0.0 {
                if ty != 0 {
                    return Err(PartitionError::ZeroMassWithNonzeroType(ty));
                }
                continue;
            }
            if ty == 0 || ty > k {
                return Err(PartitionError::TypeOutOfRange { mass, ty, k });
            }
            parts.push(Part { mass, ty });
        }
        let total: f64 = parts.iter().map(|p| p.mass).sum();
        if total > 1.0 + MASS_TOLERANCE {
            return Err(PartitionError::MassSumExceedsOne(total));
        }
        Ok(Self::from_parts(parts))
    }

    /// Ranks already-checked parts and computes the dust.
    pub(crate) fn from_parts(mut parts: Vec<Part>) -> Self {
        parts.retain(|p| p.mass > 0.0);
        parts.sort_by(lexicographic_desc);
        let total: f64 = parts.iter().map(|p| p.mass).sum();
        let dust = (1.0 - total).clamp(0.0, 1.0);
        Self { parts, dust }
    }

    /// The degenerate state `((1, ty), (0, 0), ...)`.
    pub fn unit(ty: FragmentType) -> Self {
        Self {
            parts: vec![Part { mass: 1.0, ty }],
            dust: 0.0,
        }
    }

    /// Pure dust: no components at all.
    pub fn dust_only() -> Self {
        Self {
            parts: Vec::new(),
            dust: 1.0,
        }
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn dust(&self) -> f64 {
        self.dust
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.parts.iter().map(|p| p.mass).sum()
    }

    /// True when this is exactly the single part `(1, ty)`.
    pub fn is_unit_of(&self, ty: FragmentType) -> bool {
        self.parts.len() == 1
            && self.parts[0].ty == ty
            && (self.parts[0].mass - 1.0).abs() <= MASS_TOLERANCE
    }

    /// Largest type label present, `0` for pure dust.
    pub fn max_type(&self) -> FragmentType {
        self.parts.iter().map(|p| p.ty).max().unwrap_or(0)
    }

    /// Max-based diagnostic distance: `|x_n - x'_n|` when types agree,
    /// `x_n + x'_n` when they differ, shorter sequence padded with zeros.
    pub fn distance(&self, other: &Self) -> f64 {
        let len = self.parts.len().max(other.parts.len());
        let empty = Part { mass: 0.0, ty: 0 };
        (0..len)
            .map(|n| {
                let a = self.parts.get(n).unwrap_or(&empty);
                let b = other.parts.get(n).unwrap_or(&empty);
                if a.ty == b.ty {
                    (a.mass - b.mass).abs()
                } else {
                    a.mass + b.mass
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Free-function form of [`TypedMassPartition::distance`].
pub fn mass_partition_distance(a: &TypedMassPartition, b: &TypedMassPartition) -> f64 {
    a.distance(b)
}

/// A block of a partition of `{1..n}` together with its type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedBlock {
    elements: Vec<usize>,
    ty: FragmentType,
}

impl TypedBlock {
    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn ty(&self) -> FragmentType {
        self.ty
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.elements.len() == 1
    }

    pub fn least(&self) -> usize {
        self.elements[0]
    }

    /// Builds a block from sorted elements, forcing type `0` on singletons.
    pub(crate) fn normalized(elements: Vec<usize>, ty: FragmentType) -> Self {
        let ty = if elements.len() < 2 { 0 } else { ty };
        Self { elements, ty }
    }
}

/// A partition of `{1..n}` into typed blocks ranked by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedBlockPartition {
    ground_size: usize,
    blocks: Vec<TypedBlock>,
}

impl TypedBlockPartition {
    /// Validates and ranks the given `(elements, type)` blocks. Empty blocks are
    /// dropped; a block has type `0` exactly when it is a singleton.
    pub fn new(
        ground_size: usize,
        blocks: Vec<(Vec<usize>, FragmentType)>,
    ) -> Result<Self, PartitionError> {
        let mut seen = vec![false; ground_size + 1];
        let mut out = Vec::with_capacity(blocks.len());
        for (mut elements, ty) in blocks {
            if elements.is_empty() {
                continue;
            }
            elements.sort_unstable();
            for &e in &elements {
                if e == 0 || e > ground_size {
                    return Err(PartitionError::InvalidBlocks(format!(
                        "element {e} outside 1..={ground_size}"
                    )));
                }
                if seen[e] {
                    return Err(PartitionError::InvalidBlocks(format!(
                        "element {e} appears twice"
                    )));
                }
                seen[e] = true;
            }
            if (elements.len() == 1) != (ty == 0) {
                return Err(PartitionError::InvalidBlocks(format!(
                    "block {elements:?} has type {ty}; type 0 is reserved for singletons"
                )));
            }
            out.push(TypedBlock { elements, ty });
        }
        if let Some(missing) = (1..=ground_size).find(|&e| !seen[e]) {
            return Err(PartitionError::InvalidBlocks(format!(
                "element {missing} is not covered"
            )));
        }
        Ok(Self::ranked(ground_size, out))
    }

    pub(crate) fn ranked(ground_size: usize, mut blocks: Vec<TypedBlock>) -> Self {
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b.least());
        Self {
            ground_size,
            blocks,
        }
    }

    /// `1_{[n], ty}`: a single block holding everything.
    pub fn one_block(ground_size: usize, ty: FragmentType) -> Self {
        let blocks = if ground_size == 0 {
            Vec::new()
        } else {
            vec![TypedBlock::normalized((1..=ground_size).collect(), ty)]
        };
        Self {
            ground_size,
            blocks,
        }
    }

    /// The partition of `{1..n}` into singletons.
    pub fn singletons(ground_size: usize) -> Self {
        Self {
            ground_size,
            blocks: (1..=ground_size)
                .map(|e| TypedBlock::normalized(vec![e], 0))
                .collect(),
        }
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn blocks(&self) -> &[TypedBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// For each element `1..=n`, the index of its block (slot 0 unused).
    fn block_index(&self) -> Vec<usize> {
        let mut index = vec![usize::MAX; self.ground_size + 1];
        for (b, block) in self.blocks.iter().enumerate() {
            for &e in &block.elements {
                index[e] = b;
            }
        }
        index
    }

    /// Restriction to `subset`, re-indexed to `1..=|subset|` in increasing order.
    ///
    /// A block keeps its type unless its trace on `subset` is a singleton.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self, PartitionError> {
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() {
            return Err(PartitionError::EmptyGroundSet);
        }
        if subset[0] == 0 || subset[subset.len() - 1] > self.ground_size {
            return Err(PartitionError::InvalidBlocks(format!(
                "restriction set leaves 1..={}",
                self.ground_size
            )));
        }
        let index = self.block_index();
        let mut traces: Vec<Vec<usize>> = vec![Vec::new(); self.blocks.len()];
        for (new_label, &e) in subset.iter().enumerate() {
            traces[index[e]].push(new_label + 1);
        }
        let blocks = traces
            .into_iter()
            .zip(&self.blocks)
            .map(|(elements, parent)| TypedBlock::normalized(elements, parent.ty))
            .collect();
        Ok(Self::ranked(subset.len(), blocks))
    }

    /// Restriction to `{1..m}`.
    pub fn restrict_to_prefix(&self, m: usize) -> Result<Self, PartitionError> {
        let subset: Vec<usize> = (1..=m.min(self.ground_size)).collect();
        self.restrict(&subset)
    }

    /// Splits the `n`-th block with the `n`-th splitter: the result gathers the
    /// traces of `splitters[n]` on block `n`, typed by the splitter's blocks.
    ///
    /// Splitters live on a ground set at least as large as this one; extra
    /// splitters beyond the block count are ignored.
    pub fn frag(&self, splitters: &[TypedBlockPartition]) -> Result<Self, PartitionError> {
        if splitters.len() < self.blocks.len() {
            return Err(PartitionError::GroundSizeMismatch {
                expected: self.blocks.len(),
                found: splitters.len(),
            });
        }
        let mut out = Vec::new();
        for (block, splitter) in self.blocks.iter().zip(splitters) {
            if splitter.ground_size < self.ground_size {
                return Err(PartitionError::GroundSizeMismatch {
                    expected: self.ground_size,
                    found: splitter.ground_size,
                });
            }
            out.extend(split_block(block, splitter));
        }
        Ok(Self::ranked(self.ground_size, out))
    }

    /// Frequencies `|block| / n` of non-singleton blocks; singletons become dust.
    pub fn asymptotic_frequencies(&self) -> TypedMassPartition {
        let n = self.ground_size as f64;
        let parts = self
            .blocks
            .iter()
            .filter(|b| b.len() >= 2)
            .map(|b| Part {
                mass: b.len() as f64 / n,
                ty: b.ty,
            })
            .collect();
        TypedMassPartition::from_parts(parts)
    }
}

/// Trace of `splitter` on `block`, in order of least element.
fn split_block(block: &TypedBlock, splitter: &TypedBlockPartition) -> Vec<TypedBlock> {
    if block.len() < 2 {
        return vec![TypedBlock::normalized(block.elements.clone(), 0)];
    }
    let index = splitter.block_index();
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &e in &block.elements {
        let b = index[e];
        match groups.iter_mut().find(|(label, _)| *label == b) {
            Some((_, g)) => g.push(e),
            None => groups.push((b, vec![e])),
        }
    }
    groups
        .into_iter()
        .map(|(b, elements)| TypedBlock::normalized(elements, splitter.blocks[b].ty))
        .collect()
}

/// Free-function form of [`TypedBlockPartition::frag`].
pub fn frag(
    pi: &TypedBlockPartition,
    splitters: &[TypedBlockPartition],
) -> Result<TypedBlockPartition, PartitionError> {
    pi.frag(splitters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tbp(n: usize, blocks: &[(&[usize], usize)]) -> TypedBlockPartition {
        TypedBlockPartition::new(n, blocks.iter().map(|(e, t)| (e.to_vec(), *t)).collect())
            .unwrap()
    }

    #[test]
    fn mass_partition_sorts_and_computes_dust() {
        let p = TypedMassPartition::new([(0.25, 2), (0.5, 1)], 2).unwrap();
        assert_eq!(
            p.parts(),
            &[Part { mass: 0.5, ty: 1 }, Part { mass: 0.25, ty: 2 }]
        );
        assert!((p.dust() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn equal_masses_rank_by_type_descending() {
        let p = TypedMassPartition::new([(1.0 / 3.0, 1), (1.0 / 3.0, 2)], 2).unwrap();
        assert_eq!(p.parts()[0].ty, 2);
        assert_eq!(p.parts()[1].ty, 1);
    }

    #[test]
    fn mass_partition_errors() {
        assert!(matches!(
            TypedMassPartition::new([(0.5, 0)], 2),
            Err(PartitionError::TypeOutOfRange { ty: 0, .. })
        ));
        assert!(matches!(
            TypedMassPartition::new([(0.5, 3)], 2),
            Err(PartitionError::TypeOutOfRange { ty: 3, .. })
        ));
        assert!(matches!(
            TypedMassPartition::new([(-0.1, 1)], 2),
            Err(PartitionError::NegativeMass(_))
        ));
        assert!(matches!(
            TypedMassPartition::new([(0.7, 1), (0.4, 1)], 2),
            Err(PartitionError::MassSumExceedsOne(_))
        ));
        assert!(matches!(
            TypedMassPartition::new([(0.0, 2)], 2),
            Err(PartitionError::ZeroMassWithNonzeroType(2))
        ));
        // (0, 0) is the canonical empty component and is dropped silently
        let p = TypedMassPartition::new([(0.5, 1), (0.0, 0)], 2).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn mass_sum_tolerance_absorbs_rounding() {
        let p = TypedMassPartition::new([(0.1, 1); 10], 1).unwrap();
        assert!(p.dust() <= MASS_TOLERANCE);
        assert!(TypedMassPartition::new([(0.1 + 1e-13, 1); 10], 1).is_ok());
    }

    #[test]
    fn restrict_examples() {
        let p = tbp(4, &[(&[1, 2, 3], 2), (&[4], 0)]);
        let r = p.restrict(&[1, 4]).unwrap();
        assert_eq!(r, tbp(2, &[(&[1], 0), (&[2], 0)]));

        let p = tbp(5, &[(&[1, 3, 5], 3), (&[2, 4], 1)]);
        let r = p.restrict(&[1, 2, 3]).unwrap();
        assert_eq!(r, tbp(3, &[(&[1, 3], 3), (&[2], 0)]));

        assert_eq!(p.restrict(&[1, 2, 3, 4, 5]).unwrap(), p);
        assert_eq!(p.restrict(&[]), Err(PartitionError::EmptyGroundSet));
    }

    #[test]
    fn frag_worked_example() {
        // block {3,4,5} of type i=4 is split by ({1,3,5,7},3),({2,4,6},1)
        let pi = tbp(7, &[(&[1, 2], 1), (&[3, 4, 5], 4), (&[6, 7], 2)]);
        let splitter = tbp(7, &[(&[1, 3, 5, 7], 3), (&[2, 4, 6], 1)]);
        let keep1 = TypedBlockPartition::one_block(7, 1);
        let keep2 = TypedBlockPartition::one_block(7, 2);
        let out = pi.frag(&[keep1, splitter, keep2]).unwrap();
        assert_eq!(
            out,
            tbp(7, &[(&[1, 2], 1), (&[3, 5], 3), (&[4], 0), (&[6, 7], 2)])
        );
    }

    #[test]
    fn frag_with_matching_one_block_splitters_is_identity() {
        let pi = tbp(6, &[(&[1, 4], 2), (&[2, 3, 6], 1), (&[5], 0)]);
        let splitters: Vec<_> = pi
            .blocks()
            .iter()
            .map(|b| TypedBlockPartition::one_block(6, b.ty().max(1)))
            .collect();
        assert_eq!(pi.frag(&splitters).unwrap(), pi);
    }

    #[test]
    fn frag_rejects_short_splitters() {
        let pi = tbp(4, &[(&[1, 2], 1), (&[3, 4], 1)]);
        let s = TypedBlockPartition::one_block(4, 1);
        assert!(matches!(
            pi.frag(std::slice::from_ref(&s)),
            Err(PartitionError::GroundSizeMismatch { .. })
        ));
        let small = TypedBlockPartition::one_block(3, 1);
        assert!(matches!(
            pi.frag(&[s, small]),
            Err(PartitionError::GroundSizeMismatch { .. })
        ));
    }

    #[test]
    fn asymptotic_frequency_examples() {
        let p = tbp(4, &[(&[1, 2, 3, 4], 2)]);
        let f = p.asymptotic_frequencies();
        assert_eq!(f.parts(), &[Part { mass: 1.0, ty: 2 }]);
        assert_eq!(f.dust(), 0.0);

        let p = tbp(4, &[(&[1, 3], 1), (&[2], 0), (&[4], 0)]);
        let f = p.asymptotic_frequencies();
        assert_eq!(f.parts(), &[Part { mass: 0.5, ty: 1 }]);
        assert_eq!(f.dust(), 0.5);
    }

    #[test]
    fn distance_examples() {
        let a = TypedMassPartition::new([(0.5, 1)], 2).unwrap();
        let b = TypedMassPartition::new([(0.5, 2)], 2).unwrap();
        let c = TypedMassPartition::new([(0.5, 1), (0.5, 1)], 2).unwrap();
        assert_eq!(a.distance(&a), 0.0);
        assert_eq!(a.distance(&b), 1.0);
        assert_eq!(c.distance(&a), 0.5);
    }

    #[test]
    fn block_partition_validation() {
        assert!(TypedBlockPartition::new(3, vec![(vec![1, 2], 1)]).is_err());
        assert!(TypedBlockPartition::new(2, vec![(vec![1, 2], 0)]).is_err());
        assert!(TypedBlockPartition::new(2, vec![(vec![1], 1), (vec![2], 0)]).is_err());
        assert!(TypedBlockPartition::new(2, vec![(vec![1, 1], 1), (vec![2], 0)]).is_err());
        let p = TypedBlockPartition::new(3, vec![(vec![3], 0), (vec![2, 1], 1)]).unwrap();
        assert_eq!(p.blocks()[0].elements(), &[1, 2]);
    }
}
