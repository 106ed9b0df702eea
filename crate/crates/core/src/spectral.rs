//! Spectral analysis of the Bernstein matrix.
//!
//! `e^{−Φ(θ)}` is entrywise positive whenever the intensity matrix is
//! irreducible, so its Perron root and vectors come out of plain power
//! iteration. `φ(θ)` is the matching eigenvalue of `Φ(θ)`, the one with
//! minimal real part.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{self, bernstein_matrix, intensity_matrix, FragmentationSpec, MeasureError};

/// Largest dimension accepted by [`matrix_exponential`].
pub const MAX_DIMENSION: usize = 64;
/// Largest `‖tM‖₁` accepted by [`matrix_exponential`].
pub const MAX_EXPONENT_NORM: f64 = 1e4;
/// Upper end of the default bracket searched for `θ̄`.
pub const DEFAULT_THETA_MAX: f64 = 50.0;
/// Default step of the finite-difference stencil for `φ′` and `φ″`.
pub const DEFAULT_STEP: f64 = 1e-4;

const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("matrix is {rows}x{cols}; a square matrix of size at most {MAX_DIMENSION} is required")]
    BadShape { rows: usize, cols: usize },
    #[error("norm {0} of the exponent exceeds {MAX_EXPONENT_NORM}")]
    NormTooLarge(f64),
    #[error("the intensity matrix is not irreducible")]
    NotIrreducible,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("finite-difference stencil around theta {theta} leaves the domain (lower bound {lower})")]
    StencilOutOfDomain { theta: f64, lower: f64 },
    #[error("maximizer {theta} of phi(theta)/(theta+1) sits at the bracket edge [0, {theta_max}]")]
    MaximumAtBracketEdge { theta: f64, theta_max: f64 },
    #[error("phi(theta)/(theta+1) is not unimodal on the bracket")]
    NotUnimodal,
    #[error("fixed-point residual {0} at the critical exponent exceeds 1e-6")]
    FixedPointResidual(f64),
}

/// Perron data of `Φ(θ)`: eigenvalue, normalized left/right eigenvectors and,
/// when requested, the first two derivatives of `θ ↦ φ(θ)`.
///
/// Normalization: `Σ u_i = 1` and `Σ u_i v_i = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub theta: f64,
    pub phi: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub phi_d1: Option<f64>,
    pub phi_d2: Option<f64>,
}

/// `e^{tM}` by scaling and squaring of a truncated Taylor series.
pub fn matrix_exponential(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, SpectralError> {
    let (rows, cols) = m.shape();
    if rows != cols || rows > MAX_DIMENSION {
        return Err(SpectralError::BadShape { rows, cols });
    }
    let a = m * t;
    let norm = one_norm(&a);
    if !norm.is_finite() || norm > MAX_EXPONENT_NORM {
        return Err(SpectralError::NormTooLarge(norm));
    }
    // scale to ‖A/2^s‖ ≤ 1/2; the Taylor tail then drops below 1e-17 by degree 18
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = &a / 2f64.powi(squarings);
    let identity = DMatrix::identity(rows, rows);
    let mut result = identity.clone();
    let mut term = identity;
    for degree in 1..=30 {
        term = &term * &scaled / degree as f64;
        result += &term;
        if one_norm(&term) <= f64::EPSILON * 1e-2 * one_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Strong connectivity of the transition graph `i → j` for `λ_ij > 0`, `i ≠ j`.
pub fn irreducibility_check(intensity: &DMatrix<f64>) -> bool {
    let k = intensity.nrows();
    if k <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..k {
                let rate = if forward {
                    intensity[(i, j)]
                } else {
                    intensity[(j, i)]
                };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Perron data of an explicit Bernstein-type matrix (Metzler after negation).
pub fn perron_of_matrix(phi_matrix: &DMatrix<f64>, theta: f64) -> Result<SpectralData, SpectralError> {
    let k = phi_matrix.nrows();
    let p = matrix_exponential(phi_matrix, -1.0)?;
    let (u, v) = perron_vectors(&p)?;
    let uv = u.dot(&v);
    // Rayleigh quotient on Φ itself; second-order accurate in the vector error
    let phi = (u.transpose() * phi_matrix * &v)[(0, 0)] / uv;

    let u = &u / u.sum();
    let v = &v / u.dot(&v);
    let data = SpectralData {
        theta,
        phi,
        u: u.iter().copied().collect(),
        v: v.iter().copied().collect(),
        phi_d1: None,
        phi_d2: None,
    };
    debug_assert!(eigen_residual(&p, &data) < 1e-9 || k == 0);
    Ok(data)
}

/// Max-norm residuals of `u e^{−Φ} = e^{−φ} u` and `e^{−Φ} v = e^{−φ} v`.
pub fn eigen_residual(exp_minus_phi: &DMatrix<f64>, data: &SpectralData) -> f64 {
    let u = DVector::from_column_slice(&data.u);
    let v = DVector::from_column_slice(&data.v);
    let r = (-data.phi).exp();
    let left = (exp_minus_phi.transpose() * &u - &u * r).amax();
    let right = (exp_minus_phi * &v - &v * r).amax();
    left.max(right)
}

/// Left and right Perron vectors of a positive matrix, each summing to one.
///
/// Plain power iteration, with the iteration matrix squared every 32 steps
/// so that a small spectral gap cannot stall it.
fn perron_vectors(p: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>), SpectralError> {
    let k = p.nrows();
    let start = DVector::from_element(k, 1.0 / k as f64);
    let mut v = start.clone();
    let mut u = start;
    let mut q = p.clone();
    let mut last_quotient = f64::NAN;
    for iteration in 1..=MAX_ITERATIONS {
        let mut v_next = &q * &v;
        let mut u_next = q.transpose() * &u;
        v_next /= v_next.sum();
        u_next /= u_next.sum();
        let change = (&v_next - &v).amax().max((&u_next - &u).amax());
        v = v_next;
        u = u_next;
        let quotient = (u.transpose() * p * &v)[(0, 0)] / u.dot(&v);
        let settled = (quotient - last_quotient).abs() < 1e-13 * quotient.abs().max(1.0);
        if settled && change < 1e-13 {
            return Ok((u, v));
        }
        last_quotient = quotient;
        if iteration % 32 == 0 {
            q = &q * &q;
            let scale = q.amax();
            if scale > 0.0 && scale.is_finite() {
                q /= scale;
            }
        }
    }
    Err(SpectralError::NoConvergence(MAX_ITERATIONS))
}

/// Perron eigenvalue and vectors of `Φ(θ)`; derivatives are left empty.
pub fn perron_eigen(spec: &FragmentationSpec, theta: f64) -> Result<SpectralData, SpectralError> {
    let lambda = intensity_matrix(spec)?;
    if !irreducibility_check(&lambda) {
        return Err(SpectralError::NotIrreducible);
    }
    let phi_matrix = bernstein_matrix(spec, theta)?;
    perron_of_matrix(&phi_matrix, theta)
}

/// `φ(θ)` alone.
pub fn phi(spec: &FragmentationSpec, theta: f64) -> Result<f64, SpectralError> {
    perron_eigen(spec, theta).map(|d| d.phi)
}

/// `(φ′(θ), φ″(θ))` by central differences with steps `h` and `h/2`,
/// combined by Richardson extrapolation.
pub fn phi_derivatives(
    spec: &FragmentationSpec,
    theta: f64,
    h: f64,
) -> Result<(f64, f64), SpectralError> {
    let lower = measures::theta_lower(spec);
    let reach = theta - 2.0 * h;
    if reach.is_nan() || reach <= lower + measures::THETA_GUARD {
        return Err(SpectralError::StencilOutOfDomain { theta, lower });
    }
    let centre = phi(spec, theta)?;
    let differences = |step: f64| -> Result<(f64, f64), SpectralError> {
        let plus = phi(spec, theta + step)?;
        let minus = phi(spec, theta - step)?;
        Ok((
            (plus - minus) / (2.0 * step),
            (plus - 2.0 * centre + minus) / (step * step),
        ))
    };
    let (d1_h, d2_h) = differences(h)?;
    let (d1_half, d2_half) = differences(h / 2.0)?;
    Ok((
        (4.0 * d1_half - d1_h) / 3.0,
        (4.0 * d2_half - d2_h) / 3.0,
    ))
}

/// Perron data at `θ` including `φ′` and `φ″`.
pub fn spectral_data(spec: &FragmentationSpec, theta: f64) -> Result<SpectralData, SpectralError> {
    let mut data = perron_eigen(spec, theta)?;
    let (d1, d2) = phi_derivatives(spec, theta, DEFAULT_STEP)?;
    data.phi_d1 = Some(d1);
    data.phi_d2 = Some(d2);
    Ok(data)
}

/// Critical exponent `θ̄`, maximizer of `φ(θ)/(θ+1)`, and `φ′(θ̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponent {
    pub theta_bar: f64,
    pub phi_prime: f64,
    /// `|φ(θ̄) − (θ̄+1) φ′(θ̄)|`.
    pub residual: f64,
}

/// Golden-section search for the maximizer of `g(θ) = φ(θ)/(θ+1)` on
/// `[0, theta_max]`, then a check of the stationarity identity
/// `φ(θ̄) = (θ̄+1) φ′(θ̄)`.
pub fn theta_bar(spec: &FragmentationSpec, theta_max: f64) -> Result<CriticalExponent, SpectralError> {
    let g = |theta: f64| phi(spec, theta).map(|p| p / (theta + 1.0));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, theta_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut g1 = g(x1)?;
    let mut g2 = g(x2)?;
    while hi - lo > 1e-8 {
        if g1 < g2 {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + inv_phi * (hi - lo);
            g2 = g(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - inv_phi * (hi - lo);
            g1 = g(x1)?;
        }
    }
    let mut best = 0.5 * (lo + hi);
    let edge = 1e-6 * theta_max.max(1.0);
    if best <= edge || best >= theta_max - edge {
        return Err(SpectralError::MaximumAtBracketEdge {
            theta: best,
            theta_max,
        });
    }

    // g is flat at its peak; polish with bisection on the stationarity equation
    let stationarity = |theta: f64| -> Result<f64, SpectralError> {
        let (d1, _) = phi_derivatives(spec, theta, DEFAULT_STEP)?;
        Ok(phi(spec, theta)? - (theta + 1.0) * d1)
    };
    let (mut a, mut b) = ((best - 1e-4).max(DEFAULT_STEP * 3.0), best + 1e-4);
    let (fa, fb) = (stationarity(a)?, stationarity(b)?);
    if fa.signum() != fb.signum() {
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if stationarity(mid)?.signum() == fa.signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        best = 0.5 * (a + b);
    }

    let peak = g(best)?;
    let grid = 100;
    for step in 0..=grid {
        let theta = theta_max * step as f64 / grid as f64;
        if g(theta)? > peak + 1e-12 {
            return Err(SpectralError::NotUnimodal);
        }
    }
    let (phi_prime, _) = phi_derivatives(spec, best, DEFAULT_STEP)?;
    let residual = (phi(spec, best)? - (best + 1.0) * phi_prime).abs();
    if residual >= 1e-6 {
        return Err(SpectralError::FixedPointResidual(residual));
    }
    Ok(CriticalExponent {
        theta_bar: best,
        phi_prime,
        residual,
    })
}
