//! Homogeneous multitype fragmentations.
//!
//! * [`partitions`]: typed mass-partitions, typed partitions of `{1..n}`, the
//!   fragmentation operator and asymptotic frequencies.
//! * [`paintbox`]: exchangeable typed partitions from a mass-partition.
//! * [`measures`]: model parameters, intensity matrix and Bernstein matrix of
//!   the tagged fragment.
//! * [`simulate`]: exact event-driven simulation of mass-valued,
//!   partition-valued and tagged-fragment processes.
//! * [`spectral`]: matrix exponential, Perron eigen-data of `Φ(θ)` and the
//!   critical exponent `θ̄`.
//! * [`asymptotics`]: empirical measures, additive martingales, law of large
//!   numbers, central limit and large-deviation statistics.

pub mod asymptotics;
pub mod measures;
pub mod paintbox;
pub mod partitions;
pub mod rng;
pub mod simulate;
pub mod specfile;
pub mod spectral;
pub mod stats;

pub use measures::{DislocationAtom, FragmentationSpec};
pub use partitions::{FragmentType, Part, TypedBlock, TypedBlockPartition, TypedMassPartition};
