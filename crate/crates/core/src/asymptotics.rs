//! Statistics of simulated populations and their predicted limits.
//!
//! Everything here is a fold over a [`MassWeighted`] sample: either an
//! exact [`Snapshot`] (each fragment weighted by its mass) or a
//! [`PointSample`] (each occupied fragment weighted by its share of uniform
//! marks). The two have the same conditional mean for every mass-weighted
//! statistic, so the point sample stands in for populations too large to list.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::FragmentationSpec;
use crate::partitions::FragmentType;
use crate::simulate::{LeadingFragments, PointSample, Snapshot};
use crate::spectral::{irreducibility_check, SpectralData};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("the intensity matrix is not irreducible")]
    NotIrreducible,
    #[error("theta {theta} is not below the critical exponent {theta_bar}; the martingale need not converge")]
    ThetaAboveCritical { theta: f64, theta_bar: f64 },
    #[error("invalid window [{a}, {b}]: need 0 <= a < b")]
    InvalidWindow { a: f64, b: f64 },
    #[error("spectral data lacks the derivative phi'")]
    MissingDerivative,
}

/// Population observed at a time, each fragment with a weight standing for its mass share.
pub trait MassWeighted {
    fn time(&self) -> f64;
    /// `(weight, mass, type)` per fragment.
    fn weighted(&self) -> Box<dyn Iterator<Item = (f64, f64, FragmentType)> + '_>;
}

impl MassWeighted for Snapshot {
    fn time(&self) -> f64 {
        self.time
    }

    fn weighted(&self) -> Box<dyn Iterator<Item = (f64, f64, FragmentType)> + '_> {
        Box::new(self.fragments.iter().map(|f| (f.mass, f.mass, f.ty)))
    }
}

impl MassWeighted for PointSample {
    fn time(&self) -> f64 {
        self.time
    }

    fn weighted(&self) -> Box<dyn Iterator<Item = (f64, f64, FragmentType)> + '_> {
        let m = self.points as f64;
        Box::new(
            self.fragments
                .iter()
                .map(move |&(mass, ty, count)| (count as f64 / m, mass, ty)),
        )
    }
}

/// Per-type locations `−ln X_n(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub time: f64,
    /// `locations[j - 1]` lists the points of component `j`.
    pub locations: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn count(&self) -> usize {
        self.locations.iter().map(Vec::len).sum()
    }
}

pub fn empirical_measure(snapshot: &Snapshot, k: usize) -> EmpiricalMeasure {
    let mut locations = vec![Vec::new(); k];
    for f in &snapshot.fragments {
        locations[f.ty - 1].push(-f.mass.ln());
    }
    EmpiricalMeasure {
        time: snapshot.time,
        locations,
    }
}

/// `M(θ, t) = e^{tφ(θ)} Σ_n v_{T_n}(θ) X_n^{θ+1}`, with `θ` taken from `sd`.
pub fn biggins_martingale<S: MassWeighted + ?Sized>(sample: &S, sd: &SpectralData) -> f64 {
    let sum: f64 = sample
        .weighted()
        .map(|(w, mass, ty)| w * sd.v[ty - 1] * mass.powf(sd.theta))
        .sum();
    (sample.time() * sd.phi).exp() * sum
}

/// Warning for `θ ≥ θ̄`, where the additive martingale is still defined but
/// need not converge.
pub fn critical_warning(theta: f64, theta_bar: f64) -> Option<AsymptoticsError> {
    (theta >= theta_bar).then_some(AsymptoticsError::ThetaAboveCritical { theta, theta_bar })
}

/// Profile `g` of a test function `f(y, j) = g(y)·1{j = j₀}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    Constant,
    /// `exp(−(y − center)² / 2 width²)`.
    Bump { center: f64, width: f64 },
    /// `1 / (1 + exp(−(y − center)/width))`.
    Sigmoid { center: f64, width: f64 },
    /// `(1 + cos(π (y − center)/width)) / 2` on `|y − center| ≤ width`, else 0.
    Coswin { center: f64, width: f64 },
}

impl Profile {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Profile::Constant => 1.0,
            Profile::Bump { center, width } => (-(y - center).powi(2) / (2.0 * width * width)).exp(),
            Profile::Sigmoid { center, width } => 1.0 / (1.0 + (-(y - center) / width).exp()),
            Profile::Coswin { center, width } => {
                let z = (y - center) / width;
                if z.abs() <= 1.0 {
                    0.5 * (1.0 + (std::f64::consts::PI * z).cos())
                } else {
                    0.0
                }
            }
        }
    }
}

/// Bounded continuous test function on `ℝ × {1..k}`; `ty = None` means all types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub profile: Profile,
    pub ty: Option<FragmentType>,
}

impl TestFunction {
    pub fn new(profile: Profile, ty: Option<FragmentType>) -> Self {
        Self { profile, ty }
    }

    pub fn constant() -> Self {
        Self::new(Profile::Constant, None)
    }

    pub fn indicator(ty: FragmentType) -> Self {
        Self::new(Profile::Constant, Some(ty))
    }

    pub fn eval(&self, y: f64, ty: FragmentType) -> f64 {
        match self.ty {
            Some(j) if j != ty => 0.0,
            _ => self.profile.eval(y),
        }
    }
}

/// `Σ_n X_n(t) f(t^{-1} ln X_n(t), T_n(t))`.
pub fn lln_statistic<S: MassWeighted + ?Sized>(sample: &S, f: &TestFunction) -> f64 {
    let t = sample.time();
    sample
        .weighted()
        .map(|(w, mass, ty)| w * f.eval(mass.ln() / t, ty))
        .sum()
}

/// `Σ_n X_n(t) f(t^{-1/2}(ln X_n(t) + φ′(0) t), T_n(t))`.
pub fn clt_statistic<S: MassWeighted + ?Sized>(sample: &S, f: &TestFunction, phi_d1_at_zero: f64) -> f64 {
    let t = sample.time();
    let scale = t.sqrt();
    sample
        .weighted()
        .map(|(w, mass, ty)| w * f.eval((mass.ln() + phi_d1_at_zero * t) / scale, ty))
        .sum()
}

/// Limit of [`lln_statistic`]: `Σ_j u_j f(−φ′(0), j)`.
pub fn lln_limit(u: &[f64], f: &TestFunction, phi_d1_at_zero: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(j, &uj)| uj * f.eval(-phi_d1_at_zero, j + 1))
        .sum()
}

/// Limit of [`clt_statistic`]: `Σ_j u_j E f(N(0, σ²), j)` with `σ² = −φ″(0)`,
/// by adaptive Simpson quadrature.
pub fn clt_limit(u: &[f64], f: &TestFunction, variance: f64) -> f64 {
    let sigma = variance.sqrt();
    u.iter()
        .enumerate()
        .map(|(j, &uj)| {
            if sigma == 0.0 {
                return uj * f.eval(0.0, j + 1);
            }
            let density = |y: f64| {
                (-(y * y) / (2.0 * variance)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            };
            let integrand = |y: f64| f.eval(y, j + 1) * density(y);
            uj * adaptive_simpson(&integrand, -12.0 * sigma, 12.0 * sigma, 1e-10)
        })
        .sum()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    // split first so narrow features cannot hide between the initial nodes
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(f, lo, flo, hi, fhi);
            recurse(f, lo, flo, hi, fhi, m, fm, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Probability vector `u` with `uΛ = 0`.
pub fn stationary_distribution(intensity: &DMatrix<f64>) -> Result<Vec<f64>, AsymptoticsError> {
    if !irreducibility_check(intensity) {
        return Err(AsymptoticsError::NotIrreducible);
    }
    let k = intensity.nrows();
    // rows of Λᵀ are the balance equations; one is redundant and gives way to Σu = 1
    let mut a = intensity.transpose();
    a.row_mut(k - 1).fill(1.0);
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let u = a.lu().solve(&rhs).ok_or(AsymptoticsError::NotIrreducible)?;
    Ok(u.iter().copied().collect())
}

/// `−t^{-1} ln` of the largest mass, overall and per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargestFragmentRates {
    pub time: f64,
    pub overall: Option<f64>,
    pub per_type: Vec<Option<f64>>,
}

fn decay_rate(mass: f64, t: f64) -> f64 {
    // −ln(1)/t is −0.0 otherwise
    0.0 - mass.ln() / t
}

pub fn largest_fragment_rates(snapshot: &Snapshot, k: usize) -> LargestFragmentRates {
    let t = snapshot.time;
    let mut per_type: Vec<Option<f64>> = vec![None; k];
    for f in &snapshot.fragments {
        let slot = &mut per_type[f.ty - 1];
        if slot.is_none_or(|m| f.mass > m) {
            *slot = Some(f.mass);
        }
    }
    let overall = per_type.iter().flatten().copied().reduce(f64::max);
    LargestFragmentRates {
        time: t,
        overall: overall.map(|m| decay_rate(m, t)),
        per_type: per_type.into_iter().map(|m| m.map(|m| decay_rate(m, t))).collect(),
    }
}

impl LeadingFragments {
    pub fn rates(&self) -> LargestFragmentRates {
        let t = self.time;
        LargestFragmentRates {
            time: t,
            overall: self.largest.map(|(m, _)| decay_rate(m, t)),
            per_type: self
                .largest_per_type
                .iter()
                .map(|m| m.map(|m| decay_rate(m, t)))
                .collect(),
        }
    }
}

/// Observed count in a large-deviation window and its deterministic predicted shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdCount {
    pub observed: u64,
    pub predicted_shape: f64,
}

/// Number of type-`j` fragments with `a e^{−tφ′(θ)} ≤ X_n(t) ≤ b e^{−tφ′(θ)}`,
/// next to `u_j(θ) t^{−1/2} e^{t((θ+1)φ′(θ) − φ(θ))} (e^{−a(θ+1)} − e^{−b(θ+1)})`.
/// `b` may be infinite. `sd` must carry `φ′(θ)`.
pub fn ld_count(
    snapshot: &Snapshot,
    a: f64,
    b: f64,
    j: FragmentType,
    sd: &SpectralData,
) -> Result<LdCount, AsymptoticsError> {
    if !(a >= 0.0 && a < b) {
        return Err(AsymptoticsError::InvalidWindow { a, b });
    }
    let d1 = sd.phi_d1.ok_or(AsymptoticsError::MissingDerivative)?;
    let t = snapshot.time;
    let theta1 = sd.theta + 1.0;
    let scale = (-t * d1).exp();
    let (lo, hi) = (a * scale, b * scale);
    let observed = snapshot
        .fragments
        .iter()
        .filter(|f| f.ty == j && f.mass >= lo && f.mass <= hi)
        .count() as u64;
    let predicted_shape = sd.u[j - 1]
        * t.powf(-0.5)
        * (t * (theta1 * d1 - sd.phi)).exp()
        * ((-a * theta1).exp() - (-b * theta1).exp());
    Ok(LdCount {
        observed,
        predicted_shape,
    })
}

/// Warns when every pair of distinct jump sizes `−ln x` has a rational ratio,
/// i.e. the log-masses live on a lattice and sharp window counts oscillate.
pub fn lattice_warning(spec: &FragmentationSpec) -> Option<String> {
    let mut sizes: Vec<f64> = spec.jump_sizes();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    if sizes.is_empty() {
        return None;
    }
    let all_rational = sizes
        .iter()
        .enumerate()
        .all(|(i, &x)| sizes[i + 1..].iter().all(|&y| is_nearly_rational(x / y)));
    all_rational.then(|| {
        format!("jump sizes {sizes:?} have pairwise rational ratios; the log-mass increments are lattice")
    })
}

/// Continued-fraction test: `r` lies within 1e-9 of `p/q` with `q ≤ 1000`.
fn is_nearly_rational(r: f64) -> bool {
    let (mut h0, mut h1) = (0f64, 1f64);
    let (mut k0, mut k1) = (1f64, 0f64);
    let mut x = r;
    for _ in 0..40 {
        let a = x.floor();
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > 1000.0 {
            return false;
        }
        if (r - h2 / k2).abs() <= 1e-9 * r.abs().max(1.0) {
            return true;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = x - a;
        if frac.abs() < 1e-15 {
            return false;
        }
        x = 1.0 / frac;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::examples::*;
    use crate::measures::intensity_matrix;
    use crate::rng::stream;
    use crate::simulate::{simulate_mass_fragmentation, SimOptions, SnapshotFragment};
    use crate::spectral::{perron_eigen, spectral_data};
    use approx::assert_abs_diff_eq;

    fn unit_snapshot(ty: FragmentType) -> Snapshot {
        Snapshot {
            time: 0.0,
            fragments: vec![SnapshotFragment {
                id: 0,
                mass: 1.0,
                ty,
                frozen: false,
            }],
            dust: 0.0,
        }
    }

    #[test]
    fn stationary_examples() {
        let b = stationary_distribution(&intensity_matrix(&spec_b()).unwrap()).unwrap();
        assert_abs_diff_eq!(b[0], 0.5, epsilon = 1e-14);
        let c = stationary_distribution(&intensity_matrix(&spec_c()).unwrap()).unwrap();
        assert_abs_diff_eq!(c[0], 5.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], 4.0 / 9.0, epsilon = 1e-14);
        let a = stationary_distribution(&intensity_matrix(&spec_a()).unwrap()).unwrap();
        assert_eq!(a, vec![1.0]);
        let oneway = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            stationary_distribution(&oneway),
            Err(AsymptoticsError::NotIrreducible)
        );
    }

    #[test]
    fn empirical_measure_examples() {
        let m = empirical_measure(&unit_snapshot(2), 2);
        assert_eq!(m.locations, vec![vec![], vec![0.0]]);
        let path = simulate_mass_fragmentation(&spec_a(), 3.0, 1, &SimOptions::default(), &mut stream(0, 0)).unwrap();
        let first = path.events[0].time;
        if path.events.get(1).is_none_or(|e| e.time > first) {
            let m = empirical_measure(&path.snapshot(first), 1);
            assert_eq!(m.locations[0], vec![2f64.ln(), 2f64.ln()]);
        }
        let snap = path.snapshot(3.0);
        let m = empirical_measure(&snap, 1);
        assert_eq!(m.count(), snap.fragments.len());
        let total: f64 = m.locations.iter().flatten().map(|l| (-l).exp()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn martingale_at_time_zero_and_theta_zero() {
        let sd = perron_eigen(&spec_c(), 0.7).unwrap();
        assert_abs_diff_eq!(biggins_martingale(&unit_snapshot(2), &sd), sd.v[1], epsilon = 1e-15);
        let sd0 = perron_eigen(&spec_b(), 0.0).unwrap();
        let path = simulate_mass_fragmentation(&spec_b(), 4.0, 1, &SimOptions::default(), &mut stream(1, 0)).unwrap();
        for t in [0.5, 2.0, 4.0] {
            assert_abs_diff_eq!(biggins_martingale(&path.snapshot(t), &sd0), 1.0, epsilon = 1e-9);
        }
        assert!(critical_warning(2.0, 1.42).is_some());
        assert!(critical_warning(0.5, 1.42).is_none());
    }

    #[test]
    fn constant_function_gives_total_mass() {
        let path = simulate_mass_fragmentation(&spec_c(), 3.0, 1, &SimOptions::default(), &mut stream(2, 0)).unwrap();
        let snap = path.snapshot(3.0);
        let one = TestFunction::constant();
        assert_abs_diff_eq!(lln_statistic(&snap, &one), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(clt_statistic(&snap, &one, 0.83), 1.0, epsilon = 1e-12);
        let by_type: f64 = (1..=2).map(|j| lln_statistic(&snap, &TestFunction::indicator(j))).sum();
        assert_abs_diff_eq!(by_type, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn limits_match_closed_forms() {
        let u = [5.0 / 9.0, 4.0 / 9.0];
        assert_abs_diff_eq!(lln_limit(&u, &TestFunction::indicator(2), 0.8), 4.0 / 9.0);
        // E exp(−(N−m)²/2s²) for N ~ N(0, σ²) is s/√(s²+σ²) · exp(−m²/2(s²+σ²))
        let (m, s, var) = (0.3, 0.5, 0.79);
        let f = TestFunction::new(Profile::Bump { center: m, width: s }, Some(1));
        let want = u[0] * s / (s * s + var).sqrt() * (-(m * m) / (2.0 * (s * s + var))).exp();
        assert_abs_diff_eq!(clt_limit(&u, &f, var), want, epsilon = 1e-9);
        // a sigmoid centred at 0 integrates to 1/2 against a symmetric law
        let g = TestFunction::new(Profile::Sigmoid { center: 0.0, width: 0.2 }, None);
        assert_abs_diff_eq!(clt_limit(&u, &g, var), 0.5, epsilon = 1e-9);
        let w = TestFunction::new(Profile::Coswin { center: 0.0, width: 1e-3 }, None);
        let narrow = clt_limit(&u, &w, 1.0);
        assert_abs_diff_eq!(narrow, 1e-3 / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn largest_rates_before_first_split() {
        let mut snap = unit_snapshot(1);
        snap.time = 0.1;
        let r = largest_fragment_rates(&snap, 2);
        assert_eq!(r.overall, Some(0.0));
        assert_eq!(r.per_type, vec![Some(0.0), None]);
    }

    #[test]
    fn ld_count_edge_windows() {
        let spec = spec_c();
        let path = simulate_mass_fragmentation(&spec, 4.0, 1, &SimOptions::default(), &mut stream(3, 0)).unwrap();
        let snap = path.snapshot(4.0);
        let sd = spectral_data(&spec, 0.0).unwrap();
        let total: u64 = (1..=2)
            .map(|j| ld_count(&snap, 0.0, f64::INFINITY, j, &sd).unwrap().observed)
            .sum();
        assert_eq!(total as usize, snap.fragments.len());
        let tail = ld_count(&snap, 1e6, 2e6, 1, &sd).unwrap();
        assert_eq!(tail.observed, 0);
        assert_eq!(
            ld_count(&snap, 2.0, 1.0, 1, &sd),
            Err(AsymptoticsError::InvalidWindow { a: 2.0, b: 1.0 })
        );
        let bare = perron_eigen(&spec, 0.0).unwrap();
        assert_eq!(
            ld_count(&snap, 0.0, 1.0, 1, &bare),
            Err(AsymptoticsError::MissingDerivative)
        );
    }

    #[test]
    fn lattice_detection() {
        assert!(lattice_warning(&spec_a()).is_some());
        assert!(lattice_warning(&spec_b()).is_some());
        assert!(lattice_warning(&spec_c()).is_none());
        assert!(is_nearly_rational(1.5));
        assert!(is_nearly_rational(2f64.ln() * 3.0 / (2f64.ln() * 7.0)));
        assert!(!is_nearly_rational(3f64.ln() / 2f64.ln()));
    }
}
