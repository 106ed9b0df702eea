//! Model parameters (erosion coefficients and finite-atom dislocation measures)
//! and the analytic objects they determine for the tagged fragment: the
//! intensity matrix of its type, the Markov additive characteristics, and the
//! Bernstein matrix `Φ(θ)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partitions::{FragmentType, TypedMassPartition, MASS_TOLERANCE};

/// Closest admissible distance above [`theta_lower`] for any `θ` argument.
pub const THETA_GUARD: f64 = 1e-9;

/// One atom `weight · δ_outcome` of a dislocation measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DislocationAtom {
    pub weight: f64,
    pub outcome: TypedMassPartition,
}

impl DislocationAtom {
    pub fn new(weight: f64, outcome: TypedMassPartition) -> Self {
        Self { weight, outcome }
    }
}

/// Full model: `k` types, erosion `c_i`, and dislocation atoms per type.
///
/// `dislocation[i - 1]` holds the atoms of `ν_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationSpec {
    pub k: usize,
    pub erosion: Vec<f64>,
    pub dislocation: Vec<Vec<DislocationAtom>>,
    pub conservative: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecViolation {
    #[error("the model needs at least one type")]
    NoTypes,
    #[error("expected {expected} erosion coefficients, found {found}")]
    ErosionLength { expected: usize, found: usize },
    #[error("expected {expected} dislocation lists, found {found}")]
    DislocationLength { expected: usize, found: usize },
    #[error("type {ty}: negative erosion coefficient {value}")]
    NegativeErosion { ty: FragmentType, value: f64 },
    #[error("type {ty}: erosion coefficient {value} in a model declared conservative")]
    ErosionWithConservative { ty: FragmentType, value: f64 },
    #[error("type {ty}, atom {atom}: weight {weight} is not finite and positive")]
    InvalidWeight {
        ty: FragmentType,
        atom: usize,
        weight: f64,
    },
    #[error("type {ty}, atom {atom}: outcome is the unit state (1, {ty})")]
    AtomAtUnit { ty: FragmentType, atom: usize },
    #[error("type {ty}, atom {atom}: dust {dust} in a model declared conservative")]
    NonConservativeAtom {
        ty: FragmentType,
        atom: usize,
        dust: f64,
    },
    #[error("type {ty}, atom {atom}: child type {found} outside 1..={k}")]
    ChildTypeOutOfRange {
        ty: FragmentType,
        atom: usize,
        found: FragmentType,
        k: usize,
    },
    #[error("type {ty}, atom {atom}: invalid outcome: {reason}")]
    InvalidOutcome {
        ty: FragmentType,
        atom: usize,
        reason: String,
    },
}

/// Every violation found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationReport {
    pub violations: Vec<SpecViolation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("the model is not conservative (zero erosion and dust-free atoms are required)")]
    NotConservative,
    #[error("theta {theta} is not above the lower bound {lower}")]
    ThetaOutOfDomain { theta: f64, lower: f64 },
}

impl FragmentationSpec {
    /// Atoms of `ν_ty`.
    pub fn atoms(&self, ty: FragmentType) -> &[DislocationAtom] {
        &self.dislocation[ty - 1]
    }

    /// Total dislocation rate `Σ weight` of a type-`ty` fragment.
    pub fn total_rate(&self, ty: FragmentType) -> f64 {
        self.atoms(ty).iter().map(|a| a.weight).sum()
    }

    /// Zero erosion and no atom with dust, regardless of the declared flag.
    pub fn is_conservative(&self) -> bool {
        self.erosion.iter().all(|&c| c == 0.0)
            && self
                .dislocation
                .iter()
                .flatten()
                .all(|a| a.outcome.dust() <= MASS_TOLERANCE)
    }

    /// Collects every violation of the model invariants.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut violations = Vec::new();
        if self.k == 0 {
            violations.push(SpecViolation::NoTypes);
        }
        if self.erosion.len() != self.k {
            violations.push(SpecViolation::ErosionLength {
                expected: self.k,
                found: self.erosion.len(),
            });
        }
        if self.dislocation.len() != self.k {
            violations.push(SpecViolation::DislocationLength {
                expected: self.k,
                found: self.dislocation.len(),
            });
        }
        for (i, &c) in self.erosion.iter().enumerate() {
            let ty = i + 1;
            if !(c >= 0.0 && c.is_finite()) {
                violations.push(SpecViolation::NegativeErosion { ty, value: c });
            } else if self.conservative && c > 0.0 {
                violations.push(SpecViolation::ErosionWithConservative { ty, value: c });
            }
        }
        for (i, atoms) in self.dislocation.iter().enumerate() {
            let ty = i + 1;
            for (atom, a) in atoms.iter().enumerate() {
                if !(a.weight > 0.0 && a.weight.is_finite()) {
                    violations.push(SpecViolation::InvalidWeight {
                        ty,
                        atom,
                        weight: a.weight,
                    });
                }
                let found = a.outcome.max_type();
                if found > self.k {
                    violations.push(SpecViolation::ChildTypeOutOfRange {
                        ty,
                        atom,
                        found,
                        k: self.k,
                    });
                }
                if a.outcome.is_unit_of(ty) {
                    violations.push(SpecViolation::AtomAtUnit { ty, atom });
                }
                if self.conservative && a.outcome.dust() > MASS_TOLERANCE {
                    violations.push(SpecViolation::NonConservativeAtom {
                        ty,
                        atom,
                        dust: a.outcome.dust(),
                    });
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }

    /// Positive jump sizes `-ln x_n` over all atom components.
    pub fn jump_sizes(&self) -> Vec<f64> {
        self.dislocation
            .iter()
            .flatten()
            .flat_map(|a| a.outcome.parts().iter().map(|p| -p.mass.ln()))
            .filter(|&s| s > 0.0)
            .collect()
    }

    fn require_conservative(&self) -> Result<(), MeasureError> {
        if self.is_conservative() {
            Ok(())
        } else {
            Err(MeasureError::NotConservative)
        }
    }
}

/// Checks `spec` and hands it back unchanged when every invariant holds.
pub fn validate_spec(spec: FragmentationSpec) -> Result<FragmentationSpec, ValidationReport> {
    spec.validate().map(|()| spec)
}

/// Infimum of `θ` where every entry of `Φ(θ)` is finite. Finite atoms with
/// finitely many children keep `x^{1+θ}` finite for all `θ > -1`.
pub fn theta_lower(_spec: &FragmentationSpec) -> f64 {
    -1.0
}

pub(crate) fn check_theta(spec: &FragmentationSpec, theta: f64) -> Result<(), MeasureError> {
    let lower = theta_lower(spec);
    if theta.is_finite() && theta > lower + THETA_GUARD {
        Ok(())
    } else {
        Err(MeasureError::ThetaOutOfDomain { theta, lower })
    }
}

/// `λ_ij = Σ_atoms(i) weight · (Σ_n x_n 1{i_n = j} − 1{i = j})`.
pub fn intensity_matrix(spec: &FragmentationSpec) -> Result<DMatrix<f64>, MeasureError> {
    spec.require_conservative()?;
    let k = spec.k;
    let mut lambda = DMatrix::zeros(k, k);
    for i in 1..=k {
        for atom in spec.atoms(i) {
            lambda[(i - 1, i - 1)] -= atom.weight;
            for p in atom.outcome.parts() {
                lambda[(i - 1, p.ty - 1)] += atom.weight * p.mass;
            }
        }
    }
    Ok(lambda)
}

/// `Φ(θ)_ij = Σ_atoms(i) weight · (1{i = j} − Σ_n x_n^{1+θ} 1{i_n = j})`.
pub fn bernstein_matrix(spec: &FragmentationSpec, theta: f64) -> Result<DMatrix<f64>, MeasureError> {
    spec.require_conservative()?;
    check_theta(spec, theta)?;
    Ok(raw_bernstein_matrix(spec, theta))
}

fn raw_bernstein_matrix(spec: &FragmentationSpec, theta: f64) -> DMatrix<f64> {
    let k = spec.k;
    let mut phi = DMatrix::zeros(k, k);
    for i in 1..=k {
        for atom in spec.atoms(i) {
            phi[(i - 1, i - 1)] += atom.weight;
            for p in atom.outcome.parts() {
                phi[(i - 1, p.ty - 1)] -= atom.weight * p.mass.powf(1.0 + theta);
            }
        }
    }
    phi
}

/// A point mass `weight` at jump size `size` (both for rates and probabilities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub weight: f64,
    pub size: f64,
}

/// Characteristics of the tagged-fragment Markov additive process.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCharacteristics {
    pub intensity: DMatrix<f64>,
    /// Per type `i`: compound-Poisson Lévy measure of the subordinator that
    /// drives `S` while `J = i` (same-type children, rate `weight · x_n`).
    pub subordinator_jumps: Vec<Vec<Jump>>,
    /// `p_ij`: probability that a switch `i → j` carries a jump of `S`.
    pub switch_prob: DMatrix<f64>,
    /// `B_ij` as a normalized discrete law, indexed `[i - 1][j - 1]`.
    pub switch_jumps: Vec<Vec<Vec<Jump>>>,
}

impl MapCharacteristics {
    /// Bernstein exponent `Ψ⁽ⁱ⁾(θ) = Σ rate · (1 − e^{−θ·size})`.
    pub fn psi(&self, ty: FragmentType, theta: f64) -> f64 {
        self.subordinator_jumps[ty - 1]
            .iter()
            .map(|j| j.weight * (1.0 - (-theta * j.size).exp()))
            .sum()
    }

    /// Laplace transform `B̂_ij(θ)` of the switch-jump law.
    pub fn switch_laplace(&self, from: FragmentType, to: FragmentType, theta: f64) -> f64 {
        self.switch_jumps[from - 1][to - 1]
            .iter()
            .map(|j| j.weight * (-theta * j.size).exp())
            .sum()
    }

    /// `−Λ + diag(Ψ⁽ⁱ⁾(θ)) + (λ_ij p_ij (1 − B̂_ij(θ)))_{i≠j}`.
    pub fn reassembled_bernstein(&self, theta: f64) -> DMatrix<f64> {
        let k = self.intensity.nrows();
        let mut phi = -self.intensity.clone();
        for i in 0..k {
            phi[(i, i)] += self.psi(i + 1, theta);
            for j in 0..k {
                if i != j {
                    phi[(i, j)] += self.intensity[(i, j)]
                        * self.switch_prob[(i, j)]
                        * (1.0 - self.switch_laplace(i + 1, j + 1, theta));
                }
            }
        }
        phi
    }
}

/// Splits the tagged dynamics into type switches and same-type subordinators.
///
/// Every child has mass below one, so a type switch always moves `S`: `p_ij`
/// is 1 whenever `λ_ij > 0`.
pub fn map_characteristics(spec: &FragmentationSpec) -> Result<MapCharacteristics, MeasureError> {
    let intensity = intensity_matrix(spec)?;
    let k = spec.k;
    let mut subordinator_jumps = vec![Vec::new(); k];
    let mut switch_jumps = vec![vec![Vec::new(); k]; k];
    for i in 1..=k {
        for atom in spec.atoms(i) {
            for p in atom.outcome.parts() {
                let jump = Jump {
                    weight: atom.weight * p.mass,
                    size: -p.mass.ln(),
                };
                if p.ty == i {
                    subordinator_jumps[i - 1].push(jump);
                } else {
                    switch_jumps[i - 1][p.ty - 1].push(jump);
                }
            }
        }
    }
    let mut switch_prob = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let total: f64 = switch_jumps[i][j].iter().map(|jmp: &Jump| jmp.weight).sum();
            if i != j && total > 0.0 {
                switch_prob[(i, j)] = 1.0;
                for jmp in &mut switch_jumps[i][j] {
                    jmp.weight /= total;
                }
            }
        }
    }
    Ok(MapCharacteristics {
        intensity,
        subordinator_jumps,
        switch_prob,
        switch_jumps,
    })
}

/// Reference models used across tests, docs and the CLI examples.
pub mod examples {
    use super::*;

    fn atom(weight: f64, parts: &[(f64, FragmentType)], k: usize) -> DislocationAtom {
        DislocationAtom::new(
            weight,
            TypedMassPartition::new(parts.iter().copied(), k).expect("valid example atom"),
        )
    }

    /// One type, binary splits into halves at rate 1.
    pub fn spec_a() -> FragmentationSpec {
        FragmentationSpec {
            k: 1,
            erosion: vec![0.0],
            dislocation: vec![vec![atom(1.0, &[(0.5, 1), (0.5, 1)], 1)]],
            conservative: true,
        }
    }

    /// Two types, each splitting into two halves of the other type at rate 1.
    pub fn spec_b() -> FragmentationSpec {
        FragmentationSpec {
            k: 2,
            erosion: vec![0.0, 0.0],
            dislocation: vec![
                vec![atom(1.0, &[(0.5, 2), (0.5, 2)], 2)],
                vec![atom(1.0, &[(0.5, 1), (0.5, 1)], 2)],
            ],
            conservative: true,
        }
    }

    /// Two types with uneven, non-lattice splits.
    pub fn spec_c() -> FragmentationSpec {
        FragmentationSpec {
            k: 2,
            erosion: vec![0.0, 0.0],
            dislocation: vec![
                vec![atom(1.0, &[(0.6, 1), (0.4, 2)], 2)],
                vec![atom(1.0, &[(0.5, 2), (0.3, 1), (0.2, 1)], 2)],
            ],
            conservative: true,
        }
    }
}
