//! Statistical estimators behind the acceptance verdicts.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use sohb_core::rotations::{mat_dot, so3_argmax};
use sohb_core::{Error as CoreError, Rotation};

use crate::error::{HarnessError, Result};

/// Fewest samples per side accepted by the KS tests.
pub const MIN_KS_SAMPLES: usize = 100;

/// Standard deviation of the limiting Kolmogorov distribution.
const KOLMOGOROV_SD: f64 = 0.260_494_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub name: String,
    pub value: f64,
    pub standard_error: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Tolerance or significance level the verdict was taken against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl EstimatorReport {
    fn new(name: &str, value: f64, standard_error: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            value,
            standard_error,
            samples,
            p_value: None,
            tolerance: None,
            passed: None,
        }
    }

    /// Non-rejection at level `alpha`; only meaningful for tests with a p-value.
    pub fn at_level(mut self, alpha: f64) -> Self {
        self.tolerance = Some(alpha);
        self.passed = self.p_value.map(|p| p >= alpha);
        self
    }

    /// `|value − expected| ≤ tolerance`.
    pub fn against(mut self, expected: f64, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self.passed = Some((self.value - expected).abs() <= tolerance);
        self
    }
}

/// Order parameter and the mean direction it was measured along.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub report: EstimatorReport,
    pub direction: Rotation,
}

/// `Λ̄ · J̄ / 1.5` with `J̄` the population mean of the orientations and `Λ̄` the rotation
/// maximizing `Λ ↦ Λ · J̄`; 1 for a perfectly aligned population and `c₁` for a
/// von Mises one.
///
/// Frames are averaged. The standard error treats the per-particle projections
/// `Λ̄ · Aₙ / 1.5` as independent samples, so it is zero for identical particles.
pub fn estimate_order_parameter(frames: &[Vec<Rotation>]) -> Result<OrderEstimate> {
    if frames.is_empty() || frames.iter().any(|f| f.is_empty()) {
        return Err(HarnessError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut pooled = Matrix3::zeros();
    let mut projections = Vec::new();
    let mut value = 0.0;
    for frame in frames {
        let j: Matrix3<f64> =
            frame.iter().map(|a| a.matrix()).sum::<Matrix3<f64>>() / frame.len() as f64;
        pooled += j;
        let lambda = so3_argmax(&j).ok_or_else(|| {
            CoreError::DegenerateAverage("population mean orientation vanishes".into())
        })?;
        value += mat_dot(lambda.matrix(), &j) / 1.5;
        projections.extend(frame.iter().map(|a| mat_dot(lambda.matrix(), a.matrix()) / 1.5));
    }
    value /= frames.len() as f64;
    let direction = so3_argmax(&pooled)
        .ok_or_else(|| CoreError::DegenerateAverage("pooled mean orientation vanishes".into()))?;
    let n = projections.len();
    Ok(OrderEstimate {
        report: EstimatorReport::new("order_parameter", value, standard_error(&projections), n),
        direction,
    })
}

/// Sample standard deviation over `√n`; zero for a single sample.
pub fn standard_error(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form, fast for small λ.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=6)
            .map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp())
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
pub fn ks_p_value(statistic: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * statistic)
}

fn check_len(n: usize) -> Result<()> {
    if n < MIN_KS_SAMPLES {
        return Err(HarnessError::TooFewSamples {
            needed: MIN_KS_SAMPLES,
            got: n,
        });
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn ks_report(name: &str, statistic: f64, effective_n: f64, samples: usize) -> EstimatorReport {
    let mut r = EstimatorReport::new(name, statistic, KOLMOGOROV_SD / effective_n.sqrt(), samples);
    r.p_value = Some(ks_p_value(statistic, effective_n));
    r
}

/// One-sample KS statistic from the sorted samples' CDF values.
fn one_sample_statistic(cdf_of_sorted: &[f64]) -> f64 {
    let n = cdf_of_sorted.len() as f64;
    cdf_of_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max)
}

/// One-sample test; `cdf_sorted` maps an ascending sample to its CDF values.
pub fn ks_one_sample_with<F>(samples: &[f64], cdf_sorted: F) -> Result<EstimatorReport>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    check_len(samples.len())?;
    let x = sorted(samples);
    let f = cdf_sorted(&x);
    assert_eq!(f.len(), x.len(), "one CDF value per sample");
    let n = x.len();
    Ok(ks_report("ks_one_sample", one_sample_statistic(&f), n as f64, n))
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<EstimatorReport> {
    ks_one_sample_with(samples, |x| x.iter().map(|&v| cdf(v)).collect())
}

/// Two-sample test with effective size `nm/(n+m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<EstimatorReport> {
    check_len(a.len())?;
    check_len(b.len())?;
    let a = sorted(a);
    let b = sorted(b);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        // Step past every copy of the smaller value so ties move both ECDFs together.
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(ks_report("ks_two_sample", d, ne, n + m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sohb_core::rotations::quat_to_rot;
    use sohb_core::UnitQuaternion;

    #[test]
    fn kolmogorov_series_branches_agree() {
        // Both series are valid everywhere; compare them where they meet.
        for &l in &[0.9, 0.999, 1.0, 1.001, 1.1] {
            let mut alt = 0.0;
            for k in 1..200 {
                let t = (-2.0 * (k * k) as f64 * l * l).exp();
                alt += if k % 2 == 1 { t } else { -t };
            }
            assert!((kolmogorov_sf(l) - 2.0 * alt).abs() < 1e-12, "λ = {l}");
        }
        // Tabulated critical value of the limiting law.
        assert!((kolmogorov_sf(1.627_62) - 0.01).abs() < 1e-5);
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn identical_samples_give_zero_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| rng.random()).collect();
        let r = ks_two_sample(&x, &x).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.p_value, Some(1.0));
    }

    #[test]
    fn too_few_samples() {
        let x = vec![0.5; 99];
        assert!(matches!(
            ks_one_sample(&x, |v| v),
            Err(HarnessError::TooFewSamples { needed: 100, got: 99 })
        ));
        assert!(ks_two_sample(&[0.5; 200], &x).is_err());
    }

    #[test]
    fn two_sample_statistic_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Rounded values force ties.
        let a: Vec<f64> = (0..150).map(|_| (rng.random::<f64>() * 20.0).floor()).collect();
        let b: Vec<f64> = (0..230).map(|_| (rng.random::<f64>() * 21.0).floor()).collect();
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert_eq!(ks_two_sample(&a, &b).unwrap().value, brute);
    }

    #[test]
    fn identical_population_has_full_order() {
        let q = UnitQuaternion::new(0.5, 0.5, -0.5, 0.5).unwrap();
        let frame = vec![quat_to_rot(&q); 10];
        let est = estimate_order_parameter(&[frame]).unwrap();
        assert!((est.report.value - 1.0).abs() < 1e-12);
        assert!(est.direction.angle_to(&quat_to_rot(&q)) < 1e-7);
    }

    #[test]
    fn empty_frames_are_refused() {
        assert!(estimate_order_parameter(&[]).is_err());
        assert!(estimate_order_parameter(&[vec![]]).is_err());
    }
}
