//! Von Mises laws on SO(3) and on the unit quaternions.
//!
//! The law `M_Λ(A) ∝ exp(A·Λ/D)` is a class function of `ΛᵀA`, so a draw is a
//! rotation angle θ from the marginal `exp((½+cosθ)/D) sin²(θ/2)` and an axis
//! uniform on the sphere. Normalizing constants are never formed; every moment
//! is a ratio of angle integrals.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, GaussLegendre};
use crate::rotations::{Rotation, UnitQuaternion};

/// Points in the inverse-CDF table.
pub const TABLE_POINTS: usize = 4096;

/// Relative tolerance for angle moments.
pub const MOMENT_TOLERANCE: f64 = 1e-10;

/// Below this noise level the angle integrals are taken in the variable `θ/√D`.
pub const SMALL_D: f64 = 1e-3;

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("D must be positive, got {d}")))
    }
}

/// Unnormalized density `exp((½+cosθ)/D) sin²(θ/2)` of the rotation angle of `ΛᵀA`, `A ~ M_Λ`.
///
/// Overflows for very small `D`; the integrators below use [`scaled_weight`] instead.
pub fn angle_density(theta: f64, d: f64) -> f64 {
    ((0.5 + theta.cos()) / d).exp() * (0.5 * theta).sin().powi(2)
}

/// `exp((cosθ − 1)/D)`, i.e. `m(θ)` divided by its maximum `exp(3/(2D))`.
pub fn scaled_weight(theta: f64, d: f64) -> f64 {
    let s = (0.5 * theta).sin();
    (-2.0 * s * s / d).exp()
}

/// Upper limit beyond which `exp((cosθ − 1)/D)` is below `e⁻⁸⁰⁰`.
pub fn cutoff(d: f64) -> f64 {
    PI.min(40.0 * d.sqrt())
}

/// Panel breakpoints at multiples of the peak width `√D`, up to [`cutoff`].
pub fn peak_breaks(d: f64) -> Vec<f64> {
    let s = d.sqrt();
    let end = cutoff(d);
    let mut breaks = vec![0.0];
    for k in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let b = k * s;
        if b < end {
            breaks.push(b);
        }
    }
    breaks.push(end);
    breaks
}

/// `∫₀^π g(θ) exp((cosθ − 1)/D) dθ` by panelled adaptive Simpson.
///
/// For `D < SMALL_D` the integral is carried out in `φ = θ/√D`.
pub fn peaked_integral<F: Fn(f64) -> f64>(g: F, d: f64, rel_tol: f64) -> f64 {
    let breaks = peak_breaks(d);
    if d < SMALL_D {
        let s = d.sqrt();
        let phi: Vec<f64> = breaks.iter().map(|b| b / s).collect();
        let f = |p: f64| {
            let t = s * p;
            s * g(t) * scaled_weight(t, d)
        };
        integrate_panels(&f, &phi, rel_tol)
    } else {
        let f = |t: f64| g(t) * scaled_weight(t, d);
        integrate_panels(&f, &breaks, rel_tol)
    }
}

/// Same integral with a single Gauss–Legendre rule over `[0, min(π, 40√D)]`.
pub fn peaked_integral_gl<F: Fn(f64) -> f64>(g: F, d: f64, rule: &GaussLegendre) -> f64 {
    rule.integrate(|t| g(t) * scaled_weight(t, d), 0.0, cutoff(d))
}

/// `⟨g⟩` under the angle marginal of the von Mises law.
pub fn angle_moment<F: Fn(f64) -> f64>(g: F, d: f64) -> Result<f64> {
    check_d(d)?;
    let sin2 = |t: f64| (0.5 * t).sin().powi(2);
    let num = peaked_integral(|t| g(t) * sin2(t), d, MOMENT_TOLERANCE);
    let den = peaked_integral(sin2, d, MOMENT_TOLERANCE);
    Ok(num / den)
}

/// `c₁(D) = (2/3)⟨½ + cosθ⟩`, the length of the mean of `A e₁` under `M_{I₃}`.
pub fn c1(d: f64) -> Result<f64> {
    Ok(2.0 / 3.0 * angle_moment(|t| 0.5 + t.cos(), d)?)
}

/// Mean rotation angle of a von Mises draw.
pub fn mean_angle(d: f64) -> Result<f64> {
    angle_moment(|t| t, d)
}

/// Normalized CDF of the angle marginal, evaluated by quadrature.
///
/// Independent of [`AngleTable`]; it serves as the reference law in goodness-of-fit tests.
#[derive(Debug, Clone)]
pub struct AngleCdf {
    d: f64,
    total: f64,
}

impl AngleCdf {
    pub fn new(d: f64) -> Result<Self> {
        check_d(d)?;
        let total = peaked_integral(|t| (0.5 * t).sin().powi(2), d, 1e-13);
        Ok(Self { d, total })
    }

    fn density(&self, t: f64) -> f64 {
        scaled_weight(t, self.d) * (0.5 * t).sin().powi(2) / self.total
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        if !(0.0..=PI).contains(&theta) {
            return 0.0;
        }
        self.density(theta)
    }

    /// CDF at a single angle.
    pub fn cdf(&self, theta: f64) -> f64 {
        let t = theta.clamp(0.0, PI);
        let end = cutoff(self.d);
        if t >= end {
            return 1.0;
        }
        let mut breaks: Vec<f64> = peak_breaks(self.d).into_iter().filter(|b| *b < t).collect();
        breaks.push(t);
        let f = |x: f64| self.density(x);
        integrate_panels(&f, &breaks, 1e-13).min(1.0)
    }

    /// CDF at every entry of an ascending slice, accumulated gap by gap.
    pub fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        let rule = GaussLegendre::new(8);
        let width = self.d.sqrt().min(1.0);
        let f = |x: f64| self.density(x);
        let mut out = Vec::with_capacity(sorted.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &x in sorted {
            let x = x.clamp(0.0, PI);
            debug_assert!(x >= prev, "cdf_sorted needs ascending input");
            if x - prev < 0.05 * width {
                acc += rule.integrate(f, prev, x);
            } else {
                acc = self.cdf(x);
            }
            prev = x;
            out.push(acc.min(1.0));
        }
        out
    }
}

/// Tabulated angle marginal for inverse-CDF sampling.
///
/// `cdf[0] = 0`, `cdf` is nondecreasing and `cdf[last] = 1`.
#[derive(Debug, Clone)]
pub struct AngleTable {
    pub d: f64,
    pub theta: Vec<f64>,
    /// `m(θ) sin²(θ/2)` scaled by `exp(−3/(2D))`.
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl AngleTable {
    pub fn new(d: f64) -> Result<Self> {
        check_d(d)?;
        let end = PI.min(12.0 * d.sqrt());
        let step = end / (TABLE_POINTS - 1) as f64;
        let theta: Vec<f64> = (0..TABLE_POINTS).map(|i| i as f64 * step).collect();
        let f = |t: f64| scaled_weight(t, d) * (0.5 * t).sin().powi(2);
        let density: Vec<f64> = theta.iter().map(|&t| f(t)).collect();
        let rule = GaussLegendre::new(8);
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in theta.windows(2) {
            acc += rule.integrate(f, w[0], w[1]);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        *cdf.last_mut().expect("non-empty table") = 1.0;
        Ok(Self {
            d,
            theta,
            density,
            cdf,
        })
    }

    /// Inverse CDF with linear interpolation inside a cell.
    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|c| *c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (t0, t1) = (self.theta[k - 1], self.theta[k]);
        if c1 > c0 {
            t0 + (u - c0) / (c1 - c0) * (t1 - t0)
        } else {
            t0
        }
    }
}

/// Uniform point of the unit sphere from a normalized Gaussian triple.
pub fn uniform_axis<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-150 {
            return v / n;
        }
    }
}

/// Sampler for `M_Λ` on SO(3) and the matching law on unit quaternions.
#[derive(Debug, Clone)]
pub struct VonMises {
    table: AngleTable,
}

impl VonMises {
    pub fn new(d: f64) -> Result<Self> {
        Ok(Self {
            table: AngleTable::new(d)?,
        })
    }

    pub fn d(&self) -> f64 {
        self.table.d
    }

    pub fn table(&self) -> &AngleTable {
        &self.table
    }

    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.quantile(rng.random::<f64>())
    }

    /// One uniform for the angle, then three Gaussians for the axis.
    pub fn sample_angle_axis<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Vector3<f64>) {
        let theta = self.sample_angle(rng);
        (theta, uniform_axis(rng))
    }

    /// `B ~ M_{I₃}`.
    pub fn sample_identity_rot<R: Rng + ?Sized>(&self, rng: &mut R) -> Rotation {
        let (theta, axis) = self.sample_angle_axis(rng);
        Rotation::from_axis_angle(&axis, theta)
    }

    /// `r ~ M₁`, i.e. `cos(θ/2) + sin(θ/2) n`.
    pub fn sample_identity_quat<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitQuaternion {
        let (theta, axis) = self.sample_angle_axis(rng);
        UnitQuaternion::from_axis_angle(&axis, theta)
    }

    /// `center · B` with `B ~ M_{I₃}`, a draw from `M_center`.
    pub fn sample_rot<R: Rng + ?Sized>(&self, center: &Rotation, rng: &mut R) -> Rotation {
        center * &self.sample_identity_rot(rng)
    }

    /// `center · r` with `r ~ M₁`.
    pub fn sample_quat<R: Rng + ?Sized>(
        &self,
        center: &UnitQuaternion,
        rng: &mut R,
    ) -> UnitQuaternion {
        *center * self.sample_identity_quat(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::{mat_dot, quat_to_rot};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_examples() {
        assert_eq!(angle_density(0.0, 1.0), 0.0);
        assert!((angle_density(PI, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_one() {
        for d in [1e-4, 0.01, 0.2, 1.0, 5.0, 100.0] {
            let z = peaked_integral(|t| (0.5 * t).sin().powi(2), d, 1e-12);
            let cdf = AngleCdf::new(d).unwrap();
            let norm = peaked_integral(|t| (0.5 * t).sin().powi(2) / cdf.total, d, 1e-12);
            assert!((norm - 1.0).abs() < 1e-10, "D={d}: {norm}");
            assert!(z > 0.0);
        }
    }

    #[test]
    fn c1_limits_and_range() {
        assert!(c1(1e-4).unwrap() > 0.99);
        assert!(c1(1e4).unwrap().abs() < 1e-3);
        let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
        let values: Vec<f64> = grid.iter().map(|d| c1(*d).unwrap()).collect();
        assert!(values.iter().all(|c| *c > 0.0 && *c < 1.0));
        assert!(values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn c1_large_d_matches_first_order_expansion() {
        // exp((cosθ−1)/D) ≈ 1 + (cosθ−1)/D; with the Haar marginal (2/π) sin²(θ/2)
        // this gives c₁ ≈ 1/(6D).
        let d = 1e4;
        let c = c1(d).unwrap();
        assert!((c * 6.0 * d - 1.0).abs() < 1e-3, "{}", c * 6.0 * d);
    }

    #[test]
    fn table_is_a_cdf() {
        let t = AngleTable::new(0.3).unwrap();
        assert_eq!(t.cdf[0], 0.0);
        assert_eq!(*t.cdf.last().unwrap(), 1.0);
        assert!(t.cdf.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.theta.len(), TABLE_POINTS);
    }

    #[test]
    fn table_matches_quadrature_cdf() {
        for d in [1e-3, 0.2, 1.0, 5.0] {
            let t = AngleTable::new(d).unwrap();
            let cdf = AngleCdf::new(d).unwrap();
            for k in (0..TABLE_POINTS).step_by(97) {
                assert!((t.cdf[k] - cdf.cdf(t.theta[k])).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn cdf_sorted_matches_pointwise() {
        let cdf = AngleCdf::new(0.7).unwrap();
        let pts: Vec<f64> = (0..300).map(|i| i as f64 * PI / 299.0).collect();
        let acc = cdf.cdf_sorted(&pts);
        for (p, a) in pts.iter().zip(&acc) {
            assert!((cdf.cdf(*p) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn small_d_mean_angle() {
        let vm = VonMises::new(1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| vm.sample_angle(&mut rng)).sum::<f64>() / n as f64;
        let oracle = mean_angle(1e-3).unwrap();
        assert!(mean < 0.15);
        assert!((mean - oracle).abs() < 0.01 * oracle, "{mean} vs {oracle}");
    }

    #[test]
    fn paired_draws_agree_under_phi() {
        let vm = VonMises::new(0.5).unwrap();
        let center_q = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 2.1);
        let center = quat_to_rot(&center_q);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = vm.sample_rot(&center, &mut a);
            let q = vm.sample_quat(&center_q, &mut b);
            assert!((quat_to_rot(&q).matrix() - r.matrix()).amax() < 1e-14);
            let lhs = mat_dot(r.matrix(), center.matrix());
            let rhs = 2.0 * q.dot(&center_q).powi(2) - 0.5;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
