//! Kingman's paintbox for typed mass-partitions.

use rand::Rng;

use crate::partitions::{
    FragmentType, TypedBlock, TypedBlockPartition, TypedMassPartition, MASS_TOLERANCE,
};

/// Inverse-CDF sampler over the components of one typed mass-partition.
#[derive(Debug, Clone)]
pub struct Paintbox {
    cumulative: Vec<f64>,
    masses: Vec<f64>,
    types: Vec<FragmentType>,
    /// Upper end of the uniform draw. Equals the total mass when the dust is
    /// below rounding level, so conservative outcomes never produce dust.
    span: f64,
}

impl Paintbox {
    pub fn new(x: &TypedMassPartition) -> Self {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(x.len());
        for p in x.parts() {
            acc += p.mass;
            cumulative.push(acc);
        }
        let span = if x.dust() <= MASS_TOLERANCE {
            acc.max(f64::MIN_POSITIVE)
        } else {
            1.0
        };
        Self {
            cumulative,
            masses: x.parts().iter().map(|p| p.mass).collect(),
            types: x.parts().iter().map(|p| p.ty).collect(),
            span,
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn component_type(&self, label: usize) -> FragmentType {
        self.types[label]
    }

    pub fn component_mass(&self, label: usize) -> f64 {
        self.masses[label]
    }

    /// Component index with probability equal to its mass, `None` for dust.
    pub fn draw_label<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.cumulative.is_empty() {
            return None;
        }
        let u = rng.random::<f64>() * self.span;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        (idx < self.cumulative.len()).then_some(idx)
    }

    /// Paints the given elements (in order) and groups them into typed blocks.
    /// Blocks come out ordered by least element when `elements` is sorted.
    pub fn paint<R: Rng + ?Sized>(&self, elements: &[usize], rng: &mut R) -> Vec<TypedBlock> {
        let mut slot_of_label = vec![usize::MAX; self.len()];
        let mut groups: Vec<(Vec<usize>, FragmentType)> = Vec::new();
        for &e in elements {
            match self.draw_label(rng) {
                Some(label) => {
                    if slot_of_label[label] == usize::MAX {
                        slot_of_label[label] = groups.len();
                        groups.push((Vec::new(), self.types[label]));
                    }
                    groups[slot_of_label[label]].0.push(e);
                }
                None => groups.push((vec![e], 0)),
            }
        }
        groups
            .into_iter()
            .map(|(elements, ty)| TypedBlock::normalized(elements, ty))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> TypedBlockPartition {
        let elements: Vec<usize> = (1..=n).collect();
        TypedBlockPartition::ranked(n, self.paint(&elements, rng))
    }
}

/// Paintbox sample of a typed partition of `{1..n}` based on `x`.
pub fn sample_paintbox<R: Rng + ?Sized>(
    x: &TypedMassPartition,
    n: usize,
    rng: &mut R,
) -> TypedBlockPartition {
    Paintbox::new(x).sample(n, rng)
}

/// Size-biased pick: `(x_n, i_n)` with probability `x_n`, `(0, 0)` with the dust.
pub fn size_biased_tag<R: Rng + ?Sized>(x: &TypedMassPartition, rng: &mut R) -> (f64, FragmentType) {
    let paintbox = Paintbox::new(x);
    match paintbox.draw_label(rng) {
        Some(label) => (paintbox.masses[label], paintbox.types[label]),
        None => (0.0, 0),
    }
}
