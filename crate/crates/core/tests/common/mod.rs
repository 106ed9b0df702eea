#![allow(dead_code)]

use multifrag::measures::{DislocationAtom, FragmentationSpec};
use multifrag::partitions::{FragmentType, TypedBlockPartition, TypedMassPartition};
use proptest::prelude::*;

/// Partition of `{1..n}` from a block label and a type per label.
pub fn partition_from_labels(labels: &[usize], types: &[FragmentType]) -> TypedBlockPartition {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); types.len()];
    for (e, &l) in labels.iter().enumerate() {
        groups[l].push(e + 1);
    }
    let blocks = groups
        .into_iter()
        .zip(types)
        .map(|(g, &ty)| {
            let ty = if g.len() == 1 { 0 } else { ty };
            (g, ty)
        })
        .collect();
    TypedBlockPartition::new(labels.len(), blocks).expect("generated partition is valid")
}

/// Random typed partition of `{1..n}` with up to `max_blocks` blocks and types in `1..=k`.
pub fn arb_partition(n: usize, max_blocks: usize, k: usize) -> impl Strategy<Value = TypedBlockPartition> {
    (
        prop::collection::vec(0..max_blocks, n),
        prop::collection::vec(1..=k, max_blocks),
    )
        .prop_map(|(labels, types)| partition_from_labels(&labels, &types))
}

/// Random `(mass, type)` pairs with total mass at most one.
pub fn arb_pairs(k: usize) -> impl Strategy<Value = Vec<(f64, FragmentType)>> {
    (
        prop::collection::vec((0.0f64..1.0, 1..=k), 0..6),
        0.0f64..0.5,
    )
        .prop_map(|(raw, dust)| {
            let total: f64 = raw.iter().map(|p| p.0).sum();
            if total == 0.0 {
                return Vec::new();
            }
            raw.into_iter()
                .map(|(m, ty)| (m / total * (1.0 - dust), ty))
                .collect()
        })
}

pub fn arb_mass_partition(k: usize) -> impl Strategy<Value = TypedMassPartition> {
    arb_pairs(k).prop_map(move |pairs| TypedMassPartition::new(pairs, k).expect("valid pairs"))
}

/// Dust-free outcome with 2..=4 children.
fn arb_outcome(k: usize) -> impl Strategy<Value = TypedMassPartition> {
    prop::collection::vec((0.05f64..1.0, 1..=k), 2..=4).prop_map(move |raw| {
        let total: f64 = raw.iter().map(|p| p.0).sum();
        let mut pairs: Vec<(f64, FragmentType)> =
            raw.iter().map(|&(m, ty)| (m / total, ty)).collect();
        // absorb rounding in the last child so the outcome has no dust at all
        let head: f64 = pairs[..pairs.len() - 1].iter().map(|p| p.0).sum();
        let last = pairs.len() - 1;
        pairs[last].0 = 1.0 - head;
        TypedMassPartition::new(pairs, k).expect("valid outcome")
    })
}

/// Conservative model with `1..=max_k` types and one or two atoms per type.
pub fn arb_conservative_spec(max_k: usize) -> impl Strategy<Value = FragmentationSpec> {
    (1..=max_k).prop_flat_map(|k| {
        prop::collection::vec(
            prop::collection::vec((0.2f64..2.0, arb_outcome(k)), 1..=2),
            k,
        )
        .prop_map(move |lists| FragmentationSpec {
            k,
            erosion: vec![0.0; k],
            dislocation: lists
                .into_iter()
                .map(|atoms| {
                    atoms
                        .into_iter()
                        .map(|(w, outcome)| DislocationAtom::new(w, outcome))
                        .collect()
                })
                .collect(),
            conservative: true,
        })
    })
}
