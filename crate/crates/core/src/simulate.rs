//! Event-driven simulation of fragmentation processes.
//!
//! Every fragment carries its own exponential clock with the total
//! dislocation rate of its type. When it rings an atom is picked with
//! probability proportional to its weight, and the fragment is replaced by its
//! children. This is the Poissonian construction after thinning away the atoms
//! of the wrong type.
//!
//! Besides full paths there are three reduced simulators that only follow
//! what a statistic needs: the tagged fragment, the largest fragments
//! (best-first exploration), and the fragments hit by a finite set of
//! uniformly marked points.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::FragmentationSpec;
use crate::paintbox::Paintbox;
use crate::partitions::{
    FragmentType, Part, TypedBlock, TypedBlockPartition, TypedMassPartition,
};

/// Default freezing threshold of [`SimOptions`].
pub const DEFAULT_MASS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time horizon {0} must be positive and finite")]
    InvalidHorizon(f64),
    #[error("initial type {ty} is out of range 1..={k}")]
    InitialTypeOutOfRange { ty: FragmentType, k: usize },
    #[error("the tagged fragment needs a conservative model")]
    NotConservative,
    #[error("ground set of size {0} is too small; at least 2 elements are required")]
    GroundSizeTooSmall(usize),
    #[error("erosion coefficients differ between types: {0:?}")]
    DistinctErosionCoefficients(Vec<f64>),
    #[error("fragment population exceeded the cap of {0}")]
    ResourceCap(usize),
}

/// Run options of the full mass simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Fragments lighter than this never dislocate but stay in the population.
    pub mass_floor: f64,
    /// Abort with [`SimError::ResourceCap`] once this many fragments exist.
    pub max_fragments: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            mass_floor: DEFAULT_MASS_FLOOR,
            max_fragments: None,
        }
    }
}

/// Per-type atom selection and clock rates.
#[derive(Debug, Clone)]
struct AtomSampler {
    cumulative: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

impl AtomSampler {
    fn new(spec: &FragmentationSpec) -> Self {
        let cumulative: Vec<Vec<f64>> = spec
            .dislocation
            .iter()
            .map(|atoms| {
                let mut acc = 0.0;
                atoms
                    .iter()
                    .map(|a| {
                        acc += a.weight;
                        acc
                    })
                    .collect()
            })
            .collect();
        let rates = cumulative
            .iter()
            .map(|c| c.last().copied().unwrap_or(0.0))
            .collect();
        Self { cumulative, rates }
    }

    fn rate(&self, ty: FragmentType) -> f64 {
        self.rates[ty - 1]
    }

    /// Waiting time until the next dislocation of a type-`ty` fragment.
    fn lifetime<R: Rng + ?Sized>(&self, ty: FragmentType, rng: &mut R) -> f64 {
        let rate = self.rate(ty);
        if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        }
    }

    fn atom<R: Rng + ?Sized>(&self, ty: FragmentType, rng: &mut R) -> usize {
        let cumulative = &self.cumulative[ty - 1];
        let u = rng.random::<f64>() * self.rates[ty - 1];
        cumulative
            .partition_point(|&c| c <= u)
            .min(cumulative.len() - 1)
    }
}

fn check_inputs(spec: &FragmentationSpec, t_max: f64, initial_type: FragmentType) -> Result<(), SimError> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(SimError::InvalidHorizon(t_max));
    }
    if initial_type == 0 || initial_type > spec.k {
        return Err(SimError::InitialTypeOutOfRange {
            ty: initial_type,
            k: spec.k,
        });
    }
    Ok(())
}

/// Pending dislocation, popped earliest first with ties broken by id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Clock {
    time: f64,
    id: usize,
}

impl Eq for Clock {}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Replaces component `index` of `state` by the children of `outcome` scaled
/// by its mass, and re-ranks. Dust of the outcome joins the dust of the state.
pub fn dislocate(
    state: &TypedMassPartition,
    index: usize,
    outcome: &TypedMassPartition,
) -> TypedMassPartition {
    let parent = state.parts()[index];
    let mut parts: Vec<Part> = state
        .parts()
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != index)
        .map(|(_, p)| *p)
        .collect();
    parts.extend(outcome.parts().iter().map(|c| Part {
        mass: parent.mass * c.mass,
        ty: c.ty,
    }));
    TypedMassPartition::from_parts(parts)
}

// ---------------------------------------------------------------------------
// Mass-valued paths

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub id: usize,
    pub mass: f64,
    pub ty: FragmentType,
    pub parent: Option<usize>,
    pub birth_time: f64,
    /// Time of its own dislocation, `None` while it is still present at the horizon.
    pub death_time: Option<f64>,
    /// Below the mass floor: never dislocates.
    pub frozen: bool,
}

impl Fragment {
    pub fn is_present_at(&self, t: f64) -> bool {
        self.birth_time <= t && self.death_time.is_none_or(|d| d > t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DislocationEvent {
    pub time: f64,
    pub fragment: usize,
    pub atom: usize,
    pub children: Vec<usize>,
    /// Mass sent to dust by this event.
    pub dust: f64,
}

/// Full record of one mass-fragmentation run on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationPath {
    pub initial_type: FragmentType,
    pub t_max: f64,
    pub mass_floor: f64,
    pub fragments: Vec<Fragment>,
    pub events: Vec<DislocationEvent>,
}

/// One fragment as seen in a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFragment {
    pub id: usize,
    pub mass: f64,
    pub ty: FragmentType,
    pub frozen: bool,
}

/// Fragment population at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub fragments: Vec<SnapshotFragment>,
    pub dust: f64,
}

impl Snapshot {
    pub fn total_mass(&self) -> f64 {
        self.fragments.iter().map(|f| f.mass).sum()
    }

    /// Total mass of frozen fragments.
    pub fn frozen_mass(&self) -> f64 {
        self.fragments.iter().filter(|f| f.frozen).map(|f| f.mass).sum()
    }

    pub fn to_mass_partition(&self) -> TypedMassPartition {
        TypedMassPartition::from_parts(
            self.fragments
                .iter()
                .map(|f| Part {
                    mass: f.mass,
                    ty: f.ty,
                })
                .collect(),
        )
    }

    /// Fragment containing a uniform point: `(mass, type)` with probability
    /// equal to the mass, `(0, 0)` with the dust.
    pub fn size_biased_pick<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, FragmentType) {
        crate::paintbox::size_biased_tag(&self.to_mass_partition(), rng)
    }
}

impl FragmentationPath {
    /// Population at time `t ≤ t_max`, in id order.
    pub fn snapshot(&self, t: f64) -> Snapshot {
        let fragments: Vec<SnapshotFragment> = self
            .fragments
            .iter()
            .filter(|f| f.is_present_at(t))
            .map(|f| SnapshotFragment {
                id: f.id,
                mass: f.mass,
                ty: f.ty,
                frozen: f.frozen,
            })
            .collect();
        let total: f64 = fragments.iter().map(|f| f.mass).sum();
        Snapshot {
            time: t,
            fragments,
            dust: (1.0 - total).clamp(0.0, 1.0),
        }
    }

    /// Largest relative mismatch `|parent − Σ children − dust| / parent` over all events.
    pub fn max_conservation_error(&self) -> f64 {
        self.events
            .iter()
            .map(|e| {
                let parent = self.fragments[e.fragment].mass;
                let children: f64 = e.children.iter().map(|&c| self.fragments[c].mass).sum();
                (parent - children - e.dust).abs() / parent
            })
            .fold(0.0, f64::max)
    }
}

/// Simulates the mass-valued process from a single fragment `(1, initial_type)`
/// up to `t_max`. Erosion is not applied here; see [`apply_erosion`].
pub fn simulate_mass_fragmentation<R: Rng + ?Sized>(
    spec: &FragmentationSpec,
    t_max: f64,
    initial_type: FragmentType,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<FragmentationPath, SimError> {
    check_inputs(spec, t_max, initial_type)?;
    let sampler = AtomSampler::new(spec);
    let mut fragments = vec![Fragment {
        id: 0,
        mass: 1.0,
        ty: initial_type,
        parent: None,
        birth_time: 0.0,
        death_time: None,
        frozen: 1.0 < opts.mass_floor,
    }];
    let mut events = Vec::new();
    let mut heap = BinaryHeap::new();
    if !fragments[0].frozen {
        heap.push(Reverse(Clock {
            time: sampler.lifetime(initial_type, rng),
            id: 0,
        }));
    }
    while let Some(Reverse(clock)) = heap.pop() {
        if clock.time > t_max {
            break;
        }
        let (parent_mass, parent_ty) = {
            let f = &mut fragments[clock.id];
            f.death_time = Some(clock.time);
            (f.mass, f.ty)
        };
        let atom = sampler.atom(parent_ty, rng);
        let outcome = &spec.atoms(parent_ty)[atom].outcome;
        let mut children = Vec::with_capacity(outcome.len());
        for part in outcome.parts() {
            let id = fragments.len();
            let mass = parent_mass * part.mass;
            let frozen = mass < opts.mass_floor;
            fragments.push(Fragment {
                id,
                mass,
                ty: part.ty,
                parent: Some(clock.id),
                birth_time: clock.time,
                death_time: None,
                frozen,
            });
            if !frozen {
                let time = clock.time + sampler.lifetime(part.ty, rng);
                if time <= t_max {
                    heap.push(Reverse(Clock { time, id }));
                }
            }
            children.push(id);
        }
        if let Some(cap) = opts.max_fragments {
            if fragments.len() > cap {
                return Err(SimError::ResourceCap(cap));
            }
        }
        events.push(DislocationEvent {
            time: clock.time,
            fragment: clock.id,
            atom,
            children,
            dust: parent_mass * outcome.dust(),
        });
    }
    Ok(FragmentationPath {
        initial_type,
        t_max,
        mass_floor: opts.mass_floor,
        fragments,
        events,
    })
}

/// A path seen through the exponential discount `e^{−ct}` of a common erosion rate.
#[derive(Debug, Clone, Copy)]
pub struct ErodedPath<'a> {
    pub path: &'a FragmentationPath,
    pub c: f64,
}

impl ErodedPath<'_> {
    pub fn snapshot(&self, t: f64) -> Snapshot {
        let mut snap = self.path.snapshot(t);
        let factor = (-self.c * t).exp();
        for f in &mut snap.fragments {
            f.mass *= factor;
        }
        snap.dust = (1.0 - snap.total_mass()).clamp(0.0, 1.0);
        snap
    }
}

/// Erosion view of a dislocation-only path. All erosion coefficients of
/// `spec` must coincide; the common value is returned as `c`.
pub fn apply_erosion<'a>(
    spec: &FragmentationSpec,
    path: &'a FragmentationPath,
) -> Result<ErodedPath<'a>, SimError> {
    let c = spec.erosion.first().copied().unwrap_or(0.0);
    if spec.erosion.iter().any(|&e| e != c) {
        return Err(SimError::DistinctErosionCoefficients(spec.erosion.clone()));
    }
    Ok(ErodedPath { path, c })
}

// ---------------------------------------------------------------------------
// Partition-valued paths

/// Block `replaced` (by least element) gave way to `children` at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEvent {
    pub time: f64,
    pub replaced: TypedBlock,
    pub children: Vec<TypedBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPath {
    pub ground_size: usize,
    pub initial_type: FragmentType,
    pub t_max: f64,
    pub events: Vec<PartitionEvent>,
}

impl PartitionPath {
    /// Partition of `{1..n}` at time `t`.
    pub fn state_at(&self, t: f64) -> TypedBlockPartition {
        let mut blocks = vec![TypedBlock::normalized(
            (1..=self.ground_size).collect(),
            self.initial_type,
        )];
        for event in self.events.iter().take_while(|e| e.time <= t) {
            let position = blocks
                .iter()
                .position(|b| *b == event.replaced)
                .expect("replaced block is present");
            blocks.swap_remove(position);
            blocks.extend(event.children.iter().cloned());
        }
        TypedBlockPartition::ranked(self.ground_size, blocks)
    }
}

/// Poissonian construction restricted to `{1..n}`, started from the single
/// block of the initial type. Hits that leave the block unchanged are not recorded.
pub fn simulate_partition_fragmentation<R: Rng + ?Sized>(
    spec: &FragmentationSpec,
    n: usize,
    t_max: f64,
    initial_type: FragmentType,
    rng: &mut R,
) -> Result<PartitionPath, SimError> {
    if n < 2 {
        return Err(SimError::GroundSizeTooSmall(n));
    }
    check_inputs(spec, t_max, initial_type)?;
    let sampler = AtomSampler::new(spec);
    let paintboxes: Vec<Vec<Paintbox>> = spec
        .dislocation
        .iter()
        .map(|atoms| atoms.iter().map(|a| Paintbox::new(&a.outcome)).collect())
        .collect();

    let mut blocks = vec![TypedBlock::normalized((1..=n).collect(), initial_type)];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Clock {
        time: sampler.lifetime(initial_type, rng),
        id: 0,
    }));
    let mut events = Vec::new();
    while let Some(Reverse(clock)) = heap.pop() {
        if clock.time > t_max {
            break;
        }
        let block = blocks[clock.id].clone();
        let atom = sampler.atom(block.ty(), rng);
        let children = paintboxes[block.ty() - 1][atom].paint(block.elements(), rng);
        if children.len() == 1 && children[0] == block {
            let time = clock.time + sampler.lifetime(block.ty(), rng);
            heap.push(Reverse(Clock { time, id: clock.id }));
            continue;
        }
        for child in &children {
            if child.is_singleton() {
                continue;
            }
            let id = blocks.len();
            blocks.push(child.clone());
            let time = clock.time + sampler.lifetime(child.ty(), rng);
            if time <= t_max {
                heap.push(Reverse(Clock { time, id }));
            }
        }
        events.push(PartitionEvent {
            time: clock.time,
            replaced: block,
            children,
        });
    }
    Ok(PartitionPath {
        ground_size: n,
        initial_type,
        t_max,
        events,
    })
}

// ---------------------------------------------------------------------------
// Tagged fragment

/// Jump record of the tagged pair `(J, S)`; the first entry is `(0, J_0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedState {
    pub time: f64,
    pub ty: FragmentType,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPath {
    pub t_max: f64,
    pub states: Vec<TaggedState>,
}

impl TaggedPath {
    /// `(J_t, S_t)`.
    pub fn state_at(&self, t: f64) -> (FragmentType, f64) {
        let idx = self.states.partition_point(|s| s.time <= t).max(1) - 1;
        let s = self.states[idx];
        (s.ty, s.s)
    }

    pub fn jump_count(&self) -> usize {
        self.states.len() - 1
    }
}

/// Follows only the fragment containing a uniform point: `S = −ln(mass)` and
/// `J` = its type.
pub fn simulate_tagged<R: Rng + ?Sized>(
    spec: &FragmentationSpec,
    t_max: f64,
    initial_type: FragmentType,
    rng: &mut R,
) -> Result<TaggedPath, SimError> {
    check_inputs(spec, t_max, initial_type)?;
    if !spec.is_conservative() {
        return Err(SimError::NotConservative);
    }
    let sampler = AtomSampler::new(spec);
    let paintboxes: Vec<Vec<Paintbox>> = spec
        .dislocation
        .iter()
        .map(|atoms| atoms.iter().map(|a| Paintbox::new(&a.outcome)).collect())
        .collect();
    let mut states = vec![TaggedState {
        time: 0.0,
        ty: initial_type,
        s: 0.0,
    }];
    let mut current = states[0];
    loop {
        let time = current.time + sampler.lifetime(current.ty, rng);
        if time > t_max {
            break;
        }
        let atom = sampler.atom(current.ty, rng);
        let paintbox = &paintboxes[current.ty - 1][atom];
        let label = paintbox
            .draw_label(rng)
            .expect("conservative outcomes have no dust");
        current = TaggedState {
            time,
            ty: paintbox.component_type(label),
            s: current.s - paintbox.component_mass(label).ln(),
        };
        states.push(current);
    }
    Ok(TaggedPath { t_max, states })
}

// ---------------------------------------------------------------------------
// Largest fragments

/// Largest fragment at time `t`, overall and per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingFragments {
    pub time: f64,
    /// `(X_1(t), T_1(t))`, `None` if nothing is left.
    pub largest: Option<(f64, FragmentType)>,
    /// `ξ_j(t)` for `j = 1..=k`.
    pub largest_per_type: Vec<Option<f64>>,
    /// Fragments resolved during the search.
    pub explored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    mass: f64,
    ty: FragmentType,
    birth: f64,
    id: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mass
            .total_cmp(&other.mass)
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first search for the largest fragments at time `t`.
///
/// Fragments are resolved heaviest first. A fragment whose clock rings after
/// `t` (or which is below `mass_floor`) is present at `t`, and nothing still
/// pending can be heavier, since descendants are never heavier than their
/// ancestors. The search stops once every type has its largest representative.
/// The law of the result is that of the full simulation with the same floor.
pub fn simulate_leading_fragments<R: Rng + ?Sized>(
    spec: &FragmentationSpec,
    t: f64,
    initial_type: FragmentType,
    mass_floor: f64,
    max_fragments: Option<usize>,
    rng: &mut R,
) -> Result<LeadingFragments, SimError> {
    check_inputs(spec, t, initial_type)?;
    let sampler = AtomSampler::new(spec);
    let mut heap = BinaryHeap::new();
    heap.push(Pending {
        mass: 1.0,
        ty: initial_type,
        birth: 0.0,
        id: 0,
    });
    let mut next_id = 1;
    let mut largest = None;
    let mut per_type = vec![None; spec.k];
    let mut found = 0;
    let mut explored = 0;
    while let Some(f) = heap.pop() {
        explored += 1;
        let death = if f.mass < mass_floor {
            f64::INFINITY
        } else {
            f.birth + sampler.lifetime(f.ty, rng)
        };
        if death > t {
            largest.get_or_insert((f.mass, f.ty));
            if per_type[f.ty - 1].is_none() {
                per_type[f.ty - 1] = Some(f.mass);
                found += 1;
                if found == spec.k {
                    break;
                }
            }
            continue;
        }
        let atom = sampler.atom(f.ty, rng);
        for part in spec.atoms(f.ty)[atom].outcome.parts() {
            heap.push(Pending {
                mass: f.mass * part.mass,
                ty: part.ty,
                birth: death,
                id: next_id,
            });
            next_id += 1;
        }
        if let Some(cap) = max_fragments {
            if heap.len() > cap {
                return Err(SimError::ResourceCap(cap));
            }
        }
    }
    Ok(LeadingFragments {
        time: t,
        largest,
        largest_per_type: per_type,
        explored,
    })
}

// ---------------------------------------------------------------------------
// Marked points

/// Occupied fragments at time `t` of `points` uniform marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub time: f64,
    pub points: usize,
    /// `(mass, type, number of marks)` per occupied fragment.
    pub fragments: Vec<(f64, FragmentType, usize)>,
    /// Marks that fell into dust.
    pub dust_points: usize,
}

/// Simulates only the fragments that contain at least one of `points`
/// i.i.d. uniform marks, by painting the marks of a dislocating fragment onto
/// its children. This is the partition-valued process on `{1..points}` with
/// block masses attached, and its cost does not grow with the total population.
pub fn simulate_marked_points<R: Rng + ?Sized>(
    spec: &FragmentationSpec,
    t: f64,
    points: usize,
    initial_type: FragmentType,
    rng: &mut R,
) -> Result<PointSample, SimError> {
    check_inputs(spec, t, initial_type)?;
    let sampler = AtomSampler::new(spec);
    let paintboxes: Vec<Vec<Paintbox>> = spec
        .dislocation
        .iter()
        .map(|atoms| atoms.iter().map(|a| Paintbox::new(&a.outcome)).collect())
        .collect();
    let mut fragments = Vec::new();
    let mut dust_points = 0;
    // (mass, type, birth, marks); depth first keeps the stack short
    let mut stack = vec![(1.0, initial_type, 0.0, points)];
    while let Some((mass, ty, birth, marks)) = stack.pop() {
        let death = birth + sampler.lifetime(ty, rng);
        if death > t {
            fragments.push((mass, ty, marks));
            continue;
        }
        let atom = sampler.atom(ty, rng);
        let paintbox = &paintboxes[ty - 1][atom];
        let mut counts = vec![0usize; paintbox.len()];
        for _ in 0..marks {
            match paintbox.draw_label(rng) {
                Some(label) => counts[label] += 1,
                None => dust_points += 1,
            }
        }
        for (label, &count) in counts.iter().enumerate().rev() {
            if count > 0 {
                stack.push((
                    mass * paintbox.component_mass(label),
                    paintbox.component_type(label),
                    death,
                    count,
                ));
            }
        }
    }
    Ok(PointSample {
        time: t,
        points,
        fragments,
        dust_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::examples::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn worked_dislocation_example() {
        let state = TypedMassPartition::new([(0.5, 4), (1.0 / 3.0, 3), (1.0 / 6.0, 1)], 4).unwrap();
        let outcome = TypedMassPartition::new([(2.0 / 3.0, 2), (1.0 / 3.0, 1)], 4).unwrap();
        let next = dislocate(&state, 1, &outcome);
        let want = [(0.5, 4), (2.0 / 9.0, 2), (1.0 / 6.0, 1), (1.0 / 9.0, 1)];
        assert_eq!(next.len(), 4);
        for (p, (m, ty)) in next.parts().iter().zip(want) {
            assert_abs_diff_eq!(p.mass, m, epsilon = 1e-15);
            assert_eq!(p.ty, ty);
        }
    }

    #[test]
    fn first_event_of_binary_splitting() {
        let spec = spec_a();
        let mut rng = stream(3, 0);
        let path = simulate_mass_fragmentation(&spec, 5.0, 1, &SimOptions::default(), &mut rng).unwrap();
        let first = &path.events[0];
        let before = path.snapshot(first.time * 0.999);
        assert_eq!(before.fragments.len(), 1);
        assert_eq!(before.fragments[0].mass, 1.0);
        let after = path.snapshot(first.time);
        let masses: Vec<f64> = after.fragments.iter().map(|f| f.mass).collect();
        if path.events.len() == 1 || path.events[1].time > first.time {
            assert_eq!(masses, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn mass_is_conserved_and_times_increase() {
        let spec = spec_c();
        let mut rng = stream(11, 0);
        let path = simulate_mass_fragmentation(&spec, 6.0, 2, &SimOptions::default(), &mut rng).unwrap();
        assert!(path.events.len() > 100);
        assert!(path.max_conservation_error() < 1e-12);
        assert!(path.events.windows(2).all(|w| w[0].time < w[1].time));
        for t in [0.0, 1.0, 3.3, 6.0] {
            assert_abs_diff_eq!(path.snapshot(t).total_mass(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn mass_floor_freezes_light_fragments() {
        let spec = spec_a();
        let opts = SimOptions {
            mass_floor: 0.1,
            max_fragments: None,
        };
        let path = simulate_mass_fragmentation(&spec, 50.0, 1, &opts, &mut stream(1, 0)).unwrap();
        let snap = path.snapshot(50.0);
        assert_eq!(snap.fragments.len(), 16);
        assert!(snap.fragments.iter().all(|f| f.frozen && f.mass == 1.0 / 16.0));
        assert_abs_diff_eq!(snap.frozen_mass(), 1.0);
    }

    #[test]
    fn resource_cap_is_enforced() {
        let opts = SimOptions {
            mass_floor: 0.0,
            max_fragments: Some(50),
        };
        let r = simulate_mass_fragmentation(&spec_a(), 40.0, 1, &opts, &mut stream(1, 0));
        assert_eq!(r, Err(SimError::ResourceCap(50)));
    }

    #[test]
    fn simulations_are_deterministic() {
        let spec = spec_c();
        let a = simulate_mass_fragmentation(&spec, 4.0, 1, &SimOptions::default(), &mut stream(9, 2)).unwrap();
        let b = simulate_mass_fragmentation(&spec, 4.0, 1, &SimOptions::default(), &mut stream(9, 2)).unwrap();
        assert_eq!(a, b);
        let c = simulate_mass_fragmentation(&spec, 4.0, 1, &SimOptions::default(), &mut stream(9, 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn input_checks() {
        let spec = spec_b();
        let mut rng = stream(0, 0);
        assert!(matches!(
            simulate_mass_fragmentation(&spec, 0.0, 1, &SimOptions::default(), &mut rng),
            Err(SimError::InvalidHorizon(_))
        ));
        assert!(matches!(
            simulate_tagged(&spec, 1.0, 3, &mut rng),
            Err(SimError::InitialTypeOutOfRange { .. })
        ));
        assert_eq!(
            simulate_partition_fragmentation(&spec, 1, 1.0, 1, &mut rng),
            Err(SimError::GroundSizeTooSmall(1))
        );
    }

    #[test]
    fn non_conservative_dust_is_tracked() {
        let mut spec = spec_a();
        spec.dislocation[0][0].outcome = TypedMassPartition::new([(0.5, 1), (0.3, 1)], 1).unwrap();
        spec.conservative = false;
        let path = simulate_mass_fragmentation(&spec, 3.0, 1, &SimOptions::default(), &mut stream(2, 0)).unwrap();
        assert!(path.max_conservation_error() < 1e-12);
        let snap = path.snapshot(3.0);
        let dust: f64 = path.events.iter().map(|e| e.dust).sum();
        assert_abs_diff_eq!(snap.dust, dust, epsilon = 1e-12);
        assert_eq!(
            simulate_tagged(&spec, 1.0, 1, &mut stream(2, 0)),
            Err(SimError::NotConservative)
        );
    }

    #[test]
    fn erosion_view() {
        let spec = spec_a();
        let path = simulate_mass_fragmentation(&spec, 2.0, 1, &SimOptions::default(), &mut stream(4, 0)).unwrap();
        let plain = apply_erosion(&spec, &path).unwrap();
        assert_eq!(plain.snapshot(1.5), path.snapshot(1.5));

        let mut eroded = spec.clone();
        eroded.erosion = vec![1.0];
        eroded.conservative = false;
        let view = apply_erosion(&eroded, &path).unwrap();
        let t = 2f64.ln();
        let snap = view.snapshot(t);
        assert_abs_diff_eq!(snap.total_mass(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(snap.total_mass() + snap.dust, 1.0, epsilon = 1e-12);

        let mut distinct = spec_b();
        distinct.erosion = vec![0.1, 0.2];
        assert!(matches!(
            apply_erosion(&distinct, &path),
            Err(SimError::DistinctErosionCoefficients(_))
        ));
    }

    #[test]
    fn partition_path_replays_consistently() {
        let spec = spec_c();
        let path = simulate_partition_fragmentation(&spec, 50, 3.0, 1, &mut stream(5, 0)).unwrap();
        assert_eq!(path.state_at(0.0), TypedBlockPartition::one_block(50, 1));
        let mut last = path.state_at(0.0);
        for e in &path.events {
            let state = path.state_at(e.time);
            assert_ne!(state, last);
            assert!(state.len() >= last.len());
            last = state;
        }
        assert_eq!(path.state_at(3.0), last);
    }

    #[test]
    fn tagged_spec_b_alternates() {
        let path = simulate_tagged(&spec_b(), 10.0, 1, &mut stream(6, 0)).unwrap();
        assert!(path.jump_count() > 0);
        for (n, s) in path.states.iter().enumerate() {
            assert_eq!(s.ty, if n % 2 == 0 { 1 } else { 2 });
            assert_abs_diff_eq!(s.s, n as f64 * 2f64.ln(), epsilon = 1e-12);
        }
        assert_eq!(path.state_at(0.0), (1, 0.0));
    }

    #[test]
    fn leading_fragment_before_any_split() {
        let spec = spec_a();
        let lead = simulate_leading_fragments(&spec, 1e-9, 1, 0.0, None, &mut stream(0, 0)).unwrap();
        assert_eq!(lead.largest, Some((1.0, 1)));
    }

    #[test]
    fn leading_fragment_matches_full_simulation() {
        let spec = spec_c();
        let t = 3.0;
        let mut rng = stream(10, 0);
        let full = simulate_mass_fragmentation(&spec, t, 1, &SimOptions::default(), &mut rng).unwrap();
        let snap = full.snapshot(t);
        let top = snap.fragments.iter().map(|f| f.mass).fold(0.0, f64::max);
        assert!(top > 0.0);
        let lead = simulate_leading_fragments(&spec, t, 1, 0.0, None, &mut rng).unwrap();
        let (mass, _) = lead.largest.unwrap();
        assert!(mass > 0.0 && mass <= 1.0);
        assert!(lead.largest_per_type.iter().all(|m| m.is_some_and(|m| m <= mass)));
    }

    #[test]
    fn marked_points_cover_all_marks() {
        let spec = spec_c();
        let sample = simulate_marked_points(&spec, 20.0, 100, 2, &mut stream(8, 0)).unwrap();
        let total: usize = sample.fragments.iter().map(|f| f.2).sum();
        assert_eq!(total + sample.dust_points, 100);
        assert_eq!(sample.dust_points, 0);
        let one = simulate_marked_points(&spec, 1e-9, 7, 1, &mut stream(8, 0)).unwrap();
        assert_eq!(one.fragments, vec![(1.0, 1, 7)]);
    }
}
