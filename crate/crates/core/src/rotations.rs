//! Rotation matrices, unit quaternions and Q-tensors.
//!
//! Matrices use the half-trace dot product `A · B = ½ Σ Aᵢⱼ Bᵢⱼ`, under which
//! `hat(u) · hat(v) = u · v` and every rotation has squared norm `3/2`.
//! Quaternions are stored real part first, `(w, x, y, z)`.

use std::fmt;
use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when accepting externally supplied matrices or quaternions.
pub const INPUT_TOLERANCE: f64 = 1e-10;

/// Degeneracy thresholds for averaged orientations.
///
/// Both are relative: `det M` is compared with `det·(‖M‖_F/√3)³` and the top
/// eigen-gap of a Q-tensor with `gap·‖Q‖_F`, so that rescaling the average
/// (kernel normalization, `1/N`) never changes the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub det: f64,
    pub gap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { det: 1e-9, gap: 1e-9 }
    }
}

/// `[u]ₓ`, the matrix with `hat(u) v = u × v`.
pub fn hat(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Axial vector of the antisymmetric part of `m` (inverse of [`hat`] on antisymmetric input).
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Half-trace matrix dot product `½ Σ Aᵢⱼ Bᵢⱼ`.
pub fn mat_dot(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    0.5 * a.component_mul(b).sum()
}

/// Orthogonal projection of `m` on the tangent space of SO(3) at `a`: `½(M − A Mᵀ A)`.
pub fn project_tangent(a: &Rotation, m: &Matrix3<f64>) -> Matrix3<f64> {
    let a = &a.0;
    0.5 * (m - a * m.transpose() * a)
}

/// Rotation maximizing `A ↦ A · m` over SO(3), with the determinant sign folded
/// into the smallest singular direction. Returns `None` for a zero or non-finite input.
///
/// Unlike [`polar_rotation`] this never rejects `det m ≤ 0`; it is used where a
/// maximizer is wanted regardless of the sign of the determinant.
pub fn so3_argmax(m: &Matrix3<f64>) -> Option<Rotation> {
    if !m.iter().all(|v| v.is_finite()) || m.norm() == 0.0 {
        return None;
    }
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let mut d = Matrix3::identity();
        d[(k, k)] = -1.0;
        r = u * d * v_t;
    }
    Some(Rotation(r))
}

/// Rotation factor of the polar decomposition `M = R S`, valid when `det M > 0`.
pub fn polar_rotation(m: &Matrix3<f64>) -> Result<Rotation> {
    polar_rotation_with(m, &Thresholds::default())
}

pub fn polar_rotation_with(m: &Matrix3<f64>, thresholds: &Thresholds) -> Result<Rotation> {
    let det = m.determinant();
    let scale = m.norm() / 3f64.sqrt();
    let floor = thresholds.det * scale * scale * scale;
    if !(det > floor) {
        return Err(Error::DegenerateAverage(format!(
            "det = {det:e} <= {floor:e}"
        )));
    }
    so3_argmax(m).ok_or_else(|| Error::DegenerateAverage("non-finite matrix".into()))
}

/// Polar factor of a matrix close to SO(3), used to pull a drifted rotation back.
///
/// Near the group the Newton iteration `X ← ½(X + X⁻ᵀ)` converges quadratically
/// to the same factor [`polar_rotation`] returns; anything else goes through the SVD.
pub fn retract(m: &Matrix3<f64>) -> Option<Rotation> {
    let drift = (m.transpose() * m - Matrix3::identity()).amax();
    if drift < 0.1 && m.determinant() > 0.0 {
        let mut x = *m;
        for _ in 0..16 {
            let inv_t = x.try_inverse()?.transpose();
            let next = 0.5 * (x + inv_t);
            let change = (next - x).amax();
            x = next;
            if change < 1e-15 {
                return Some(Rotation(x));
            }
        }
    }
    so3_argmax(m)
}

/// `polar_rotation(A + A[w]ₓ)` in closed form.
///
/// `I + [w]ₓ` is normal, fixes `w` and acts as `1 + i|w|` on the orthogonal plane, so
/// its polar factor is the rotation by `atan|w|` about `w`. One Newton–Schulz sweep
/// then removes the rounding drift of the product.
pub fn retract_tangent(a: &Rotation, w: &Vector3<f64>) -> Rotation {
    let n2 = w.norm_squared();
    if n2 == 0.0 {
        return *a;
    }
    // cos(atan n) = 1/√(1+n²), sin(atan n) = n/√(1+n²)
    let c = 1.0 / (1.0 + n2).sqrt();
    let r = c * (Matrix3::identity() + hat(w)) + ((1.0 - c) / n2) * (w * w.transpose());
    let x = a.0 * r;
    Rotation(0.5 * x * (3.0 * Matrix3::identity() - x.tr_mul(&x)))
}

/// A 3×3 special orthogonal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` if it is a rotation to within [`INPUT_TOLERANCE`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let r = Self(m);
        let err = r.orthogonality_error();
        let det = m.determinant();
        if err > INPUT_TOLERANCE || (det - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "not a rotation: |RᵀR − I| = {err:e}, det = {det}"
            )));
        }
        Ok(r)
    }

    /// Wraps `m` without checking; callers guarantee it is a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Row-major entries, as written in frame and snapshot files.
    pub fn from_row_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::InvalidParameter(format!(
                "rotation needs 9 entries, got {}",
                v.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Rodrigues formula; `axis` need not be normalized but must be nonzero
    /// unless `angle` is zero.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let k = hat(&(axis / n));
        let (s, c) = angle.sin_cos();
        Self(Matrix3::identity() + s * k + (1.0 - c) * k * k)
    }

    /// Rotation by `|v|` about `v`.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    /// Haar-uniform random rotation.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        quat_to_rot(&UnitQuaternion::uniform(rng))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// First column `A e₁`, the direction of motion.
    pub fn e1(&self) -> Vector3<f64> {
        self.0.column(0).into_owned()
    }

    /// Rotation angle in `[0, π]`, computed with `atan2` so small angles keep full precision.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let s = vee(m).norm();
        let c = 0.5 * (m.trace() - 1.0);
        s.atan2(c)
    }

    /// Geodesic angle between `self` and `other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        Rotation(self.0.transpose() * other.0).angle()
    }

    /// Largest entry of `|RᵀR − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Hamilton product of raw `(w, x, y, z)` quaternions.
pub fn qmul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    )
}

/// Conjugate of a raw quaternion.
pub fn qconj(a: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(a[0], -a[1], -a[2], -a[3])
}

/// Embeds a vector of ℝ³ as a purely imaginary quaternion.
pub fn pure(v: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(0.0, v.x, v.y, v.z)
}

/// Imaginary part of a raw quaternion.
pub fn imag(a: &Vector4<f64>) -> Vector3<f64> {
    Vector3::new(a[1], a[2], a[3])
}

/// A point of the unit-quaternion sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion(Vector4<f64>);

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self(Vector4::new(1.0, 0.0, 0.0, 0.0))
    }

    /// Accepts `(w, x, y, z)` if its norm is 1 to within [`INPUT_TOLERANCE`].
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector4::new(w, x, y, z);
        if (v.norm() - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "quaternion norm {} is not 1",
                v.norm()
            )));
        }
        Ok(Self(v))
    }

    /// Normalizes `v`; panics on a zero vector.
    pub fn from_vector_normalize(v: Vector4<f64>) -> Self {
        let n = v.norm();
        assert!(n > 0.0 && n.is_finite(), "cannot normalize quaternion {v:?}");
        Self(v / n)
    }

    pub fn from_vector_unchecked(v: Vector4<f64>) -> Self {
        Self(v)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [w, x, y, z] => Self::new(*w, *x, *y, *z),
            _ => Err(Error::InvalidParameter(format!(
                "quaternion needs 4 entries, got {}",
                v.len()
            ))),
        }
    }

    /// `cos(θ/2) + sin(θ/2) n`, the rotation by `angle` about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis * (s / n);
        Self(Vector4::new(c, a.x, a.y, a.z))
    }

    /// Uniform on the 3-sphere (normalized 4-dimensional Gaussian).
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                return Self(v / n);
            }
        }
    }

    pub fn coords(&self) -> &Vector4<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.0[0], self.0[1], self.0[2], self.0[3]]
    }

    pub fn w(&self) -> f64 {
        self.0[0]
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn conj(&self) -> Self {
        Self(qconj(&self.0))
    }

    /// `q u q*` for `u ∈ ℝ³`.
    pub fn rotate(&self, u: &Vector3<f64>) -> Vector3<f64> {
        imag(&qmul(&qmul(&self.0, &pure(u)), &qconj(&self.0)))
    }

    /// `Im(q e₁ q*)`, the direction of motion.
    pub fn e1(&self) -> Vector3<f64> {
        self.rotate(&Vector3::x())
    }

    /// Sign representative whose first component above `1e-12` in magnitude is positive.
    pub fn canonical(&self) -> Self {
        match self.0.iter().find(|c| c.abs() > 1e-12) {
            Some(c) if *c < 0.0 => -*self,
            _ => *self,
        }
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;
    fn neg(self) -> UnitQuaternion {
        UnitQuaternion(-self.0)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(qmul(&self.0, &rhs.0))
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {}i + {}j + {}k",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

/// `Φ(q)`: the rotation `u ↦ q u q*`, whose columns are `q eᵢ q*`.
pub fn quat_to_rot(q: &UnitQuaternion) -> Rotation {
    let [w, x, y, z] = q.to_array();
    Rotation(Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    ))
}

/// A preimage of `r` under `Φ` (Shepperd's method), returned in canonical sign.
pub fn rot_to_quat(r: &Rotation) -> UnitQuaternion {
    let m = &r.0;
    let tr = m.trace();
    let candidates = [tr, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (k, _) = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("four candidates");
    let v = match k {
        0 => {
            let s = 2.0 * (1.0 + tr).sqrt();
            Vector4::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        }
        1 => {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            Vector4::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        }
        2 => {
            let s = 2.0 * (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
            Vector4::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        }
        _ => {
            let s = 2.0 * (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
            Vector4::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        }
    };
    UnitQuaternion::from_vector_normalize(v).canonical()
}

/// A symmetric, trace-free 4×4 matrix (a Q-tensor or an average of Q-tensors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTensor(Matrix4<f64>);

impl QTensor {
    pub fn zero() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn from_matrix_unchecked(m: Matrix4<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// Tensor contraction `Q : Q̃ = Σ Qᵢⱼ Q̃ᵢⱼ`.
    pub fn contract(&self, other: &QTensor) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// `self += weight · other`.
    pub fn add_scaled(&mut self, weight: f64, other: &QTensor) {
        self.0 += weight * other.0;
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// `Ψ(q) = q ⊗ q − ¼ I₄`.
pub fn qtensor(q: &UnitQuaternion) -> QTensor {
    QTensor(q.0 * q.0.transpose() - 0.25 * Matrix4::identity())
}

/// Unit eigenvector of the largest eigenvalue, sign-canonicalized.
pub fn max_eigvec(q: &QTensor) -> Result<UnitQuaternion> {
    max_eigvec_with(q, &Thresholds::default())
}

pub fn max_eigvec_with(q: &QTensor, thresholds: &Thresholds) -> Result<UnitQuaternion> {
    let scale = q.0.norm();
    if !scale.is_finite() {
        return Err(Error::DegenerateAverage("non-finite Q-tensor".into()));
    }
    let eig = SymmetricEigen::new(q.0);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let gap = eig.eigenvalues[order[0]] - eig.eigenvalues[order[1]];
    if !(gap > thresholds.gap * scale) {
        return Err(Error::DegenerateAverage(format!(
            "top eigen-gap {gap:e} <= {:e}",
            thresholds.gap * scale
        )));
    }
    let v: Vector4<f64> = eig.eigenvectors.column(order[0]).into_owned();
    Ok(UnitQuaternion::from_vector_normalize(v).canonical())
}
