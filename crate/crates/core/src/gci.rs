//! Generalized collision invariants and the hydrodynamic constants.
//!
//! The gradual model needs the bounded solution `h` of
//!
//! ```text
//! (1−r²)^{3/2} e^{2r²/D} (−4r²/D − 3) h + [(1−r²)^{5/2} e^{2r²/D} h']' = r (1−r²)^{3/2} e^{2r²/D}
//! ```
//!
//! on `(−1, 1)`. Dividing by `(1−r²)^{3/2} e^{2r²/D}` gives
//! `(1−r²)h'' + (4r(1−r²)/D − 5r)h' − (3 + 4r²/D)h = r`, whose endpoints are regular
//! singular points with exponents `0` and `−3/2`. Polynomial collocation at every
//! Chebyshev–Lobatto node, endpoints included, selects the bounded branch without
//! boundary data. The jump model uses `h̄(r) = r`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::Model;
use crate::quadrature::GaussLegendre;
use crate::rotations::{hat, mat_dot, Rotation};
use crate::sampling::{self, peak_breaks, peaked_integral, peaked_integral_gl, scaled_weight, VonMises};

/// Chebyshev expansion `Σ aₖ Tₖ(x)` on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevSeries {
    pub coeffs: Vec<f64>,
}

impl ChebyshevSeries {
    /// Interpolant through values at the Lobatto nodes `cos(πj/N)`, `j = 0..=N`.
    pub fn from_lobatto_values(values: &[f64]) -> Self {
        let n = values.len() - 1;
        let nf = n as f64;
        let coeffs = (0..=n)
            .map(|k| {
                let mut s = 0.0;
                for (j, v) in values.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    s += w * v * (PI * (j * k) as f64 / nf).cos();
                }
                let c = 2.0 / nf * s;
                if k == 0 || k == n {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect();
        Self { coeffs }
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &a in self.coeffs.iter().skip(1).rev() {
            let b0 = a + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs.first().copied().unwrap_or(0.0) + x * b1 - b2
    }

    /// Coefficients of the derivative.
    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        if n <= 1 {
            return Self { coeffs: vec![0.0] };
        }
        let mut d = vec![0.0; n];
        for k in (0..n - 1).rev() {
            let next = if k + 2 < n { d[k + 2] } else { 0.0 };
            d[k] = next + 2.0 * (k + 1) as f64 * self.coeffs[k + 1];
        }
        d[0] *= 0.5;
        d.truncate(n - 1);
        Self { coeffs: d }
    }
}

/// Lobatto nodes `cos(πj/N)` and the first-derivative collocation matrix.
pub fn chebyshev_differentiation(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    let c = |j: usize| {
        let base = if j == 0 || j == n { 2.0 } else { 1.0 };
        if j % 2 == 0 {
            base
        } else {
            -base
        }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    // negative-sum trick for the diagonal
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    (x, d)
}

/// Refinement ladder and tolerances for [`solve_h_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub ladder: Vec<usize>,
    /// Required bound on the interior residual of the undivided equation.
    pub tolerance: f64,
    /// The ladder stops early once the residual is below this.
    pub target: f64,
    /// Points of the Chebyshev grid on which the residual is measured.
    pub check_points: usize,
    /// Distance of the residual grid from `±1`.
    pub margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            ladder: vec![16, 32, 64, 128, 256],
            tolerance: 1e-6,
            target: 1e-11,
            check_points: 2048,
            margin: 1e-4,
        }
    }
}

/// Residual history of one rung of the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub nodes: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum HBar {
    Identity,
    Spectral {
        h: ChebyshevSeries,
        dh: ChebyshevSeries,
        d2h: ChebyshevSeries,
    },
}

/// `h̄` and `k̄` for one model and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct GciProfile {
    pub model: Model,
    pub d: f64,
    hbar: HBar,
    /// Gradual model: interior residual of the undivided equation, and the ladder history.
    pub residual: Option<f64>,
    pub ladder: Vec<LadderStep>,
}

fn check_d(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("D must be positive, got {d}")))
    }
}

impl GciProfile {
    /// Jump model: `h̄(r) = r`.
    pub fn jump(d: f64) -> Result<Self> {
        check_d(d)?;
        Ok(Self {
            model: Model::Jump,
            d,
            hbar: HBar::Identity,
            residual: None,
            ladder: Vec::new(),
        })
    }

    pub fn for_model(model: Model, d: f64) -> Result<Self> {
        match model {
            Model::Jump => Self::jump(d),
            Model::Gradual => solve_h(d),
        }
    }

    pub fn hbar(&self, r: f64) -> f64 {
        match &self.hbar {
            HBar::Identity => r,
            HBar::Spectral { h, .. } => h.eval(r),
        }
    }

    pub fn hbar_prime(&self, r: f64) -> f64 {
        match &self.hbar {
            HBar::Identity => 1.0,
            HBar::Spectral { dh, .. } => dh.eval(r),
        }
    }

    /// Chebyshev coefficients of `h` (gradual model only).
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.hbar {
            HBar::Identity => None,
            HBar::Spectral { h, .. } => Some(&h.coeffs),
        }
    }

    /// `k̄(s) = h̄(½√(2s+1)) / (½√(2s+1))` on the closed range `[−½, 3/2]`.
    ///
    /// The end `s = −½` uses the limit `h̄'(0)`; `s = 3/2` is `h̄(1)`.
    pub fn kbar(&self, s: f64) -> Result<f64> {
        if !(-0.5..=1.5).contains(&s) {
            return Err(Error::DomainError {
                value: s,
                domain: "[-1/2, 3/2]",
            });
        }
        let r = 0.5 * (2.0 * s + 1.0).sqrt();
        if r == 0.0 {
            return Ok(self.hbar_prime(0.0));
        }
        Ok(self.hbar(r) / r)
    }

    /// Divided-form residual `(1−r²)h'' + (4r(1−r²)/D − 5r)h' − (3 + 4r²/D)h − r`.
    pub fn divided_residual(&self, r: f64) -> f64 {
        match &self.hbar {
            HBar::Identity => f64::NAN,
            HBar::Spectral { h, dh, d2h } => {
                divided_operator(r, self.d, h.eval(r), dh.eval(r), d2h.eval(r)) - r
            }
        }
    }

    /// Residual of the undivided equation: the divided residual times `(1−r²)^{3/2} e^{2r²/D}`.
    pub fn residual_at(&self, r: f64) -> f64 {
        self.divided_residual(r) * undivided_factor(r, self.d)
    }
}

fn divided_operator(r: f64, d: f64, h: f64, dh: f64, d2h: f64) -> f64 {
    let w = 1.0 - r * r;
    w * d2h + (4.0 * r * w / d - 5.0 * r) * dh - (3.0 + 4.0 * r * r / d) * h
}

/// `(1−r²)^{3/2} e^{2r²/D}`.
pub fn undivided_factor(r: f64, d: f64) -> f64 {
    (1.0 - r * r).max(0.0).powf(1.5) * (2.0 * r * r / d).exp()
}

/// Points `r` where the interior residual is checked: a Chebyshev grid on `[−1+margin, 1−margin]`.
pub fn residual_grid(points: usize, margin: f64) -> Vec<f64> {
    let half = 1.0 - margin;
    (0..points)
        .map(|j| half * (PI * (j as f64 + 0.5) / points as f64).cos())
        .collect()
}

/// Solves for `h` with the default ladder.
pub fn solve_h(d: f64) -> Result<GciProfile> {
    solve_h_with(d, &SolveOptions::default())
}

/// Collocation solve at each ladder size until the residual target is met.
pub fn solve_h_with(d: f64, opts: &SolveOptions) -> Result<GciProfile> {
    check_d(d)?;
    let grid = residual_grid(opts.check_points, opts.margin);
    let mut ladder = Vec::new();
    let mut best: Option<GciProfile> = None;
    for &n in &opts.ladder {
        let profile = collocate(d, n)?;
        let residual = grid
            .iter()
            .map(|&r| profile.residual_at(r).abs())
            .fold(0.0, f64::max);
        ladder.push(LadderStep { nodes: n, residual });
        let better = best
            .as_ref()
            .and_then(|b| b.residual)
            .is_none_or(|r| residual < r);
        if better {
            best = Some(GciProfile {
                residual: Some(residual),
                ..profile
            });
        }
        if residual <= opts.target {
            break;
        }
    }
    let mut best = best.ok_or_else(|| Error::InvalidParameter("empty refinement ladder".into()))?;
    let residual = best.residual.unwrap_or(f64::INFINITY);
    if !(residual <= opts.tolerance) {
        return Err(Error::NoConvergence {
            residual,
            tolerance: opts.tolerance,
            nodes: opts.ladder.last().copied().unwrap_or(0),
        });
    }
    best.ladder = ladder;
    Ok(best)
}

fn collocate(d: f64, n: usize) -> Result<GciProfile> {
    let (x, dm) = chebyshev_differentiation(n);
    let d2 = &dm * &dm;
    let m = n + 1;
    let mut op = DMatrix::zeros(m, m);
    for i in 0..m {
        let r = x[i];
        let w = 1.0 - r * r;
        let a1 = 4.0 * r * w / d - 5.0 * r;
        let a0 = 3.0 + 4.0 * r * r / d;
        for j in 0..m {
            op[(i, j)] = w * d2[(i, j)] + a1 * dm[(i, j)];
        }
        op[(i, i)] -= a0;
    }
    let rhs = DVector::from_vec(x.clone());
    let values = op.lu().solve(&rhs).ok_or(Error::NoConvergence {
        residual: f64::INFINITY,
        tolerance: 0.0,
        nodes: n,
    })?;
    let h = ChebyshevSeries::from_lobatto_values(values.as_slice());
    let dh = h.derivative();
    let d2h = dh.derivative();
    Ok(GciProfile {
        model: Model::Gradual,
        d,
        hbar: HBar::Spectral { h, dh, d2h },
        residual: None,
        ladder: Vec::new(),
    })
}

/// The constants of the macroscopic system for one model and noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GciConstants {
    pub d: f64,
    pub model: Model,
    pub c1: f64,
    pub c2: f64,
    pub c2_prime: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Relative tolerance of the constant quadratures.
pub const CONSTANT_TOLERANCE: f64 = 1e-12;

/// `sin⁴(θ/2) h̄(cos(θ/2)) cos(θ/2)`; multiplied by `m(θ)` this is the weight `w(θ)`.
pub fn weight_factor(profile: &GciProfile, theta: f64) -> f64 {
    let c = (0.5 * theta).cos();
    (0.5 * theta).sin().powi(4) * profile.hbar(c) * c
}

/// `w(θ)` up to the positive factor `exp(−3/(2D))`.
pub fn weight(profile: &GciProfile, theta: f64) -> f64 {
    scaled_weight(theta, profile.d) * weight_factor(profile, theta)
}

/// Constants by adaptive Simpson quadrature.
pub fn constants_for(profile: &GciProfile) -> Result<GciConstants> {
    let d = profile.d;
    let avg = |g: &dyn Fn(f64) -> f64| {
        let num = peaked_integral(|t| g(t) * weight_factor(profile, t), d, CONSTANT_TOLERANCE);
        let den = peaked_integral(|t| weight_factor(profile, t), d, CONSTANT_TOLERANCE);
        num / den
    };
    Ok(GciConstants {
        d,
        model: profile.model,
        c1: sampling::c1(d)?,
        c2: 0.2 * avg(&|t| 2.0 + 3.0 * t.cos()),
        c2_prime: 0.2 * avg(&|t| 1.0 + 4.0 * t.cos()),
        c3: 0.5 * d,
        c4: 0.2 * avg(&|t| 1.0 - t.cos()),
    })
}

/// Constants by a single Gauss–Legendre rule, the independent cross-check of [`constants_for`].
pub fn constants_gauss_legendre(profile: &GciProfile, nodes: usize) -> Result<GciConstants> {
    let d = profile.d;
    let rule = GaussLegendre::new(nodes);
    let sin2 = |t: f64| (0.5 * t).sin().powi(2);
    let den = peaked_integral_gl(|t| weight_factor(profile, t), d, &rule);
    let avg = |g: &dyn Fn(f64) -> f64| {
        peaked_integral_gl(|t| g(t) * weight_factor(profile, t), d, &rule) / den
    };
    let c1_num = peaked_integral_gl(|t| (0.5 + t.cos()) * sin2(t), d, &rule);
    let c1_den = peaked_integral_gl(sin2, d, &rule);
    Ok(GciConstants {
        d,
        model: profile.model,
        c1: 2.0 / 3.0 * c1_num / c1_den,
        c2: 0.2 * avg(&|t| 2.0 + 3.0 * t.cos()),
        c2_prime: 0.2 * avg(&|t| 1.0 + 4.0 * t.cos()),
        c3: 0.5 * d,
        c4: 0.2 * avg(&|t| 1.0 - t.cos()),
    })
}

/// Solves the profile if needed and computes the constants.
pub fn constants(d: f64, model: Model) -> Result<GciConstants> {
    constants_for(&GciProfile::for_model(model, d)?)
}

/// Quadrature on SO(3) adapted to von Mises laws: rotations `Λ R(θ, n)` with
/// weights that sum to one under the law `M_Λ`.
#[derive(Debug, Clone)]
pub struct VonMisesQuadrature {
    pub nodes: Vec<Rotation>,
    pub weights: Vec<f64>,
}

impl VonMisesQuadrature {
    /// `angle_points` Gauss–Legendre points per angle panel, a product rule on the
    /// sphere with `polar` Gauss–Legendre points in `cos β` and `azimuth` equal angles.
    pub fn new(center: &Rotation, d: f64, angle_points: usize, polar: usize, azimuth: usize) -> Self {
        let angle_rule = GaussLegendre::new(angle_points);
        let polar_rule = GaussLegendre::new(polar);
        let mut thetas = Vec::new();
        for w in peak_breaks(d).windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            for (x, wt) in angle_rule.nodes.iter().zip(&angle_rule.weights) {
                let t = mid + half * x;
                thetas.push((t, half * wt * scaled_weight(t, d) * (0.5 * t).sin().powi(2)));
            }
        }
        let total: f64 = thetas.iter().map(|(_, w)| w).sum();
        let mut dirs = Vec::new();
        for (z, wz) in polar_rule.nodes.iter().zip(&polar_rule.weights) {
            let s = (1.0 - z * z).sqrt();
            for k in 0..azimuth {
                let phi = 2.0 * PI * k as f64 / azimuth as f64;
                dirs.push((Vector3::new(s * phi.cos(), s * phi.sin(), *z), 0.5 * wz / azimuth as f64));
            }
        }
        let mut nodes = Vec::with_capacity(thetas.len() * dirs.len());
        let mut weights = Vec::with_capacity(thetas.len() * dirs.len());
        for (t, wt) in &thetas {
            for (n, wn) in &dirs {
                nodes.push(center * &Rotation::from_axis_angle(n, *t));
                weights.push(wt / total * wn);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(&Rotation) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(a, w)| w * f(a)).sum()
    }
}

/// `ψ(A) = P · Λ₀ᵀA` for `P = [p]ₓ`.
pub fn psi(lambda0: &Rotation, p: &Vector3<f64>, a: &Rotation) -> f64 {
    mat_dot(&hat(p), &(lambda0.matrix().transpose() * a.matrix()))
}

/// `|∫ ψ M_{Λ₀}|` for `ψ = P·Λ₀ᵀA` by quadrature over angle and axis.
///
/// In the jump model `Γ*ψ = ∫ψM − ψ`, so a vanishing integral means `ψ` solves the
/// invariant equation with right-hand side `−P·Λ₀ᵀA`.
pub fn verify_adjoint_jump(lambda0: &Rotation, p: &Vector3<f64>, d: f64) -> Result<f64> {
    check_d(d)?;
    let q = VonMisesQuadrature::new(lambda0, d, 24, 16, 32);
    Ok(q.integrate(|a| psi(lambda0, p, a)).abs())
}

/// `Γ*1 = ∫ M − 1` evaluated by the same quadrature.
pub fn adjoint_jump_of_constant(lambda0: &Rotation, d: f64) -> Result<f64> {
    check_d(d)?;
    let q = VonMisesQuadrature::new(lambda0, d, 24, 16, 32);
    Ok(q.integrate(|_| 1.0) - 1.0)
}

/// Monte Carlo mean of `ψ` under `M_{Λ₀}` with its standard error.
pub fn adjoint_jump_monte_carlo<R: Rng + ?Sized>(
    lambda0: &Rotation,
    p: &Vector3<f64>,
    d: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let vm = VonMises::new(d)?;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..samples {
        let v = psi(lambda0, p, &vm.sample_rot(lambda0, rng));
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Solves the discretized jump adjoint equation `(1ωᵀ − I)ψ = P·Λ₀ᵀA` by SVD least
/// squares, adds `shift` along the kernel, and returns the relative residual of the
/// best fit of `ψ` in `span{1, Eᵢ·Λ₀ᵀA}`.
pub fn span_closure_residual(lambda0: &Rotation, p: &Vector3<f64>, d: f64, shift: f64) -> Result<f64> {
    check_d(d)?;
    let quad = VonMisesQuadrature::new(lambda0, d, 4, 4, 8);
    let k = quad.nodes.len();
    let mut op = DMatrix::from_fn(k, k, |_, j| quad.weights[j]);
    for i in 0..k {
        op[(i, i)] -= 1.0;
    }
    let rhs = DVector::from_iterator(k, quad.nodes.iter().map(|a| psi(lambda0, p, a)));
    let svd = op.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-10)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let sol = sol.add_scalar(shift);
    let basis = DMatrix::from_fn(k, 4, |i, j| {
        if j == 0 {
            1.0
        } else {
            let mut e = Vector3::zeros();
            e[j - 1] = 1.0;
            psi(lambda0, &e, &quad.nodes[i])
        }
    });
    let fit = basis
        .clone()
        .svd(true, true)
        .solve(&sol, 1e-12)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let resid = &sol - basis * fit;
    Ok(resid.norm() / sol.norm())
}

/// `Λ₀ᵀ ∫ A M_{Λ₀}(A) dA`, which equals `c₁ I₃`.
pub fn mean_rotation_matrix(lambda0: &Rotation, d: f64) -> Result<Matrix3<f64>> {
    check_d(d)?;
    let q = VonMisesQuadrature::new(lambda0, d, 24, 16, 32);
    let mut m = Matrix3::zeros();
    for (a, w) in q.nodes.iter().zip(&q.weights) {
        m += *w * a.matrix();
    }
    Ok(lambda0.matrix().transpose() * m)
}
