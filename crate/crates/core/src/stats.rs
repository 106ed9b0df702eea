//! Small statistical toolkit for the Monte Carlo checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean − target|` in units of the standard error. Zero spread counts
    /// as an exact match only when the mean equals the target to 1e-12.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if self.std_err > 0.0 {
            diff / self.std_err
        } else if diff <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic Kolmogorov p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    TestOutcome {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson χ² test of homogeneity for two count vectors over the same
/// categories. Categories empty in both samples are ignored.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> TestOutcome {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&x, &y) in a.iter().zip(b) {
        let total = (x + y) as f64;
        if total == 0.0 {
            continue;
        }
        cells += 1;
        let ea = total * na / (na + nb);
        let eb = total * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    chi_square_outcome(stat, cells.max(2) - 1)
}

/// Pearson χ² goodness-of-fit of observed counts against probabilities.
pub fn chi_square_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> TestOutcome {
    let n: f64 = observed.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(probabilities) {
        if p <= 0.0 {
            if o > 0 {
                return TestOutcome {
                    statistic: f64::INFINITY,
                    p_value: 0.0,
                };
            }
            continue;
        }
        cells += 1;
        let e = n * p;
        stat += (o as f64 - e).powi(2) / e;
    }
    chi_square_outcome(stat, cells.max(2) - 1)
}

fn chi_square_outcome(statistic: f64, dof: usize) -> TestOutcome {
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    TestOutcome {
        statistic,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_error() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m.mean, 2.5);
        assert_abs_diff_eq!(m.std_err, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert!(m.within(2.5 + m.std_err * 2.9, 3.0));
        let c = MeanEstimate::from_samples(&[1.0; 5]);
        assert!(c.within(1.0, 3.0));
        assert!(!c.within(1.1, 3.0));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // standard table values
        assert_abs_diff_eq!(kolmogorov_survival(1.358), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_survival(1.628), 0.01, epsilon = 2e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_detects_shift_only_when_present() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.5);
        let c: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &c);
        assert_abs_diff_eq!(r.statistic, 0.2, epsilon = 2e-3);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn chi_square_cases() {
        let r = chi_square_goodness_of_fit(&[25, 25, 50], &[0.25, 0.25, 0.5]);
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0);
        let r = chi_square_two_sample(&[100, 0], &[0, 100]);
        assert!(r.p_value < 1e-20);
        // 3.841 is the 95% quantile with one degree of freedom
        let r = chi_square_outcome(3.841, 1);
        assert_abs_diff_eq!(r.p_value, 0.05, epsilon = 1e-3);
    }

    #[test]
    fn line_fit() {
        let (s, c) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-14);
    }
}
