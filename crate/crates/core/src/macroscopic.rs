//! Macroscopic equations for density and mean body orientation on a periodic grid.
//!
//! Both formulations are written through a per-node angular velocity: the matrix
//! system as `Λ_t = [Ω]ₓΛ` and the quaternion system as `q_t = ½Ω q`. Spatial
//! derivatives enter only through `(∂ⱼΛ)Λᵀ` and `(∂ⱼq)q*`, so every assembled term
//! is tangent by construction.

use nalgebra::{Matrix3, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gci::GciConstants;
use crate::micro::Representation;
use crate::rotations::{hat, imag, pure, qconj, qmul, quat_to_rot, retract, vee, Rotation, UnitQuaternion};

/// Uniform periodic grid; node `(i, j, k)` sits at `(i hₓ, j h_y, k h_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
        }
        if !spacing.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter("grid spacing must be positive".into()));
        }
        Ok(Self { dims, spacing })
    }

    /// `n` nodes along the first axis over a period `length`; one node on the others.
    pub fn line(n: usize, length: f64) -> Result<Self> {
        let h = length / n as f64;
        Self::new([n, 1, 1], [h, h, h])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, n: usize) -> [usize; 3] {
        let i = n % self.dims[0];
        let j = (n / self.dims[0]) % self.dims[1];
        let k = n / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn position(&self, n: usize) -> Vector3<f64> {
        let c = self.coords(n);
        Vector3::new(
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        )
    }

    /// Periodic neighbor of `n` one step forward (`forward`) or backward along `axis`.
    pub fn neighbor(&self, n: usize, axis: usize, forward: bool) -> usize {
        let mut c = self.coords(n);
        let m = self.dims[axis];
        c[axis] = if forward { (c[axis] + 1) % m } else { (c[axis] + m - 1) % m };
        self.index(c[0], c[1], c[2])
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Axes with more than one node; derivatives along the others vanish.
    pub fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(|&a| self.dims[a] > 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrientationField {
    Matrix(Vec<Rotation>),
    Quaternion(Vec<UnitQuaternion>),
}

impl OrientationField {
    pub fn len(&self) -> usize {
        match self {
            Self::Matrix(v) => v.len(),
            Self::Quaternion(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn representation(&self) -> Representation {
        match self {
            Self::Matrix(_) => Representation::Matrix,
            Self::Quaternion(_) => Representation::Quaternion,
        }
    }

    pub fn rotation(&self, n: usize) -> Rotation {
        match self {
            Self::Matrix(v) => v[n],
            Self::Quaternion(v) => quat_to_rot(&v[n]),
        }
    }

    pub fn e1(&self, n: usize) -> Vector3<f64> {
        match self {
            Self::Matrix(v) => v[n].e1(),
            Self::Quaternion(v) => v[n].e1(),
        }
    }
}

/// Density and orientation at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField {
    pub grid: Grid,
    pub t: f64,
    pub rho: Vec<f64>,
    pub orientation: OrientationField,
}

impl MacroField {
    pub fn new(grid: Grid, rho: Vec<f64>, orientation: OrientationField) -> Result<Self> {
        if rho.len() != grid.len() || orientation.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} densities and {} orientations for {} nodes",
                rho.len(),
                orientation.len(),
                grid.len()
            )));
        }
        if !rho.iter().all(|r| *r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter("density must be finite and non-negative".into()));
        }
        Ok(Self {
            grid,
            t: 0.0,
            rho,
            orientation,
        })
    }

    /// Quaternion field sampled from `f(x) = (ρ, q)` at the node positions.
    pub fn from_fn<F: Fn(&Vector3<f64>) -> (f64, UnitQuaternion)>(grid: Grid, f: F) -> Result<Self> {
        let (rho, q): (Vec<f64>, Vec<UnitQuaternion>) =
            (0..grid.len()).map(|n| f(&grid.position(n))).unzip();
        Self::new(grid, rho, OrientationField::Quaternion(q))
    }

    /// The same field with orientations mapped through `Φ`.
    pub fn to_matrix(&self) -> Self {
        let rots = (0..self.grid.len()).map(|n| self.orientation.rotation(n)).collect();
        Self {
            orientation: OrientationField::Matrix(rots),
            ..self.clone()
        }
    }

    /// `Σ ρ` times the cell volume.
    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Largest departure from `RᵀR = I` or `|q| = 1` over the nodes.
    pub fn invariant_error(&self) -> f64 {
        match &self.orientation {
            OrientationField::Matrix(v) => v
                .iter()
                .map(|r| r.orthogonality_error().max((r.matrix().determinant() - 1.0).abs()))
                .fold(0.0, f64::max),
            OrientationField::Quaternion(v) => v
                .iter()
                .map(|q| (q.coords().norm() - 1.0).abs())
                .fold(0.0, f64::max),
        }
    }

    fn rotations(&self) -> Result<&[Rotation]> {
        match &self.orientation {
            OrientationField::Matrix(v) => Ok(v),
            OrientationField::Quaternion(_) => Err(Error::WrongRepresentation { expected: "matrix" }),
        }
    }

    fn quaternions(&self) -> Result<&[UnitQuaternion]> {
        match &self.orientation {
            OrientationField::Quaternion(v) => Ok(v),
            OrientationField::Matrix(_) => Err(Error::WrongRepresentation {
                expected: "quaternion",
            }),
        }
    }
}

/// Per-node `𝒟ₓ(Λ)`, `δₓ(Λ) = Tr 𝒟ₓ` and `rₓ(Λ)` with `[rₓ]ₓ = 𝒟ₓ − 𝒟ₓᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationDerivatives {
    pub big_d: Vec<Matrix3<f64>>,
    pub delta: Vec<f64>,
    pub r: Vec<Vector3<f64>>,
    /// Largest symmetric part of a difference quotient `(∂ⱼΛ)Λᵀ`; zero in the continuum.
    pub symmetric_part: f64,
}

/// Per-node `∂_{j,rel} q = (∂ⱼq)q*` (imaginary parts) and the relative divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDerivatives {
    pub rel: Vec<[Vector3<f64>; 3]>,
    pub divergence: Vec<f64>,
    /// Largest real part of a difference quotient `(∂ⱼq)q*`; zero in the continuum.
    pub real_part: f64,
}

impl RelativeDerivatives {
    /// `(∇_rel q) e` at node `n`: the vector with components `(∂_{i,rel} q) · e`.
    pub fn gradient_dot(&self, n: usize, e: &Vector3<f64>) -> Vector3<f64> {
        let w = &self.rel[n];
        Vector3::new(w[0].dot(e), w[1].dot(e), w[2].dot(e))
    }

    /// `(e · ∇) q q*`, the imaginary quaternion `Σⱼ eⱼ ∂_{j,rel} q`.
    pub fn directional(&self, n: usize, e: &Vector3<f64>) -> Vector3<f64> {
        let w = &self.rel[n];
        e[0] * w[0] + e[1] * w[1] + e[2] * w[2]
    }
}

fn node_orientation_derivative(grid: &Grid, rots: &[Rotation], n: usize) -> (Matrix3<f64>, f64) {
    let mut big_d = Matrix3::zeros();
    let mut sym = 0.0f64;
    let lt = rots[n].matrix().transpose();
    for axis in grid.active_axes() {
        let p = rots[grid.neighbor(n, axis, true)].matrix();
        let m = rots[grid.neighbor(n, axis, false)].matrix();
        let w = (p - m) * lt / (2.0 * grid.spacing[axis]);
        sym = sym.max((0.5 * (w + w.transpose())).amax());
        big_d.set_column(axis, &vee(&w));
    }
    (big_d, sym)
}

/// Central-difference `𝒟ₓ`, `δₓ`, `rₓ` of a matrix field.
pub fn orientation_derivatives(field: &MacroField) -> Result<OrientationDerivatives> {
    let rots = field.rotations()?;
    let grid = &field.grid;
    let per_node: Vec<(Matrix3<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|n| node_orientation_derivative(grid, rots, n))
        .collect();
    let symmetric_part = per_node.iter().map(|p| p.1).fold(0.0, f64::max);
    let big_d: Vec<Matrix3<f64>> = per_node.into_iter().map(|p| p.0).collect();
    let delta = big_d.iter().map(|d| d.trace()).collect();
    let r = big_d.iter().map(|d| 2.0 * vee(d)).collect();
    Ok(OrientationDerivatives {
        big_d,
        delta,
        r,
        symmetric_part,
    })
}

/// Fails with [`Error::SignDiscontinuity`] if two adjacent nodes have `q · q' < 0`.
pub fn check_sign_continuity(grid: &Grid, quats: &[UnitQuaternion]) -> Result<()> {
    for n in 0..grid.len() {
        for axis in grid.active_axes() {
            let m = grid.neighbor(n, axis, true);
            if quats[n].dot(&quats[m]) < 0.0 {
                return Err(Error::SignDiscontinuity { node: n, neighbor: m });
            }
        }
    }
    Ok(())
}

/// Chooses signs so that each node agrees with the previous one in the sweep
/// `i` fastest, then `j`, then `k`, and checks the result, periodic wrap included.
pub fn sign_lift(grid: &Grid, quats: &mut [UnitQuaternion]) -> Result<()> {
    for n in 0..grid.len() {
        let c = grid.coords(n);
        let prev = if c[0] > 0 {
            Some(grid.index(c[0] - 1, c[1], c[2]))
        } else if c[1] > 0 {
            Some(grid.index(c[0], c[1] - 1, c[2]))
        } else if c[2] > 0 {
            Some(grid.index(c[0], c[1], c[2] - 1))
        } else {
            None
        };
        if let Some(p) = prev {
            if quats[n].dot(&quats[p]) < 0.0 {
                quats[n] = -quats[n];
            }
        }
    }
    check_sign_continuity(grid, quats)
}

fn node_rel_derivative(grid: &Grid, quats: &[UnitQuaternion], n: usize) -> ([Vector3<f64>; 3], f64) {
    let mut rel = [Vector3::zeros(); 3];
    let mut real = 0.0f64;
    let qc = qconj(quats[n].coords());
    for axis in grid.active_axes() {
        let p = quats[grid.neighbor(n, axis, true)].coords();
        let m = quats[grid.neighbor(n, axis, false)].coords();
        let w = qmul(&((p - m) / (2.0 * grid.spacing[axis])), &qc);
        real = real.max(w[0].abs());
        rel[axis] = imag(&w);
    }
    (rel, real)
}

/// Central-difference relative derivatives of a sign-continuous quaternion field.
pub fn rel_derivative(field: &MacroField) -> Result<RelativeDerivatives> {
    let quats = field.quaternions()?;
    let grid = &field.grid;
    check_sign_continuity(grid, quats)?;
    let per_node: Vec<([Vector3<f64>; 3], f64)> = (0..grid.len())
        .into_par_iter()
        .map(|n| node_rel_derivative(grid, quats, n))
        .collect();
    let real_part = per_node.iter().map(|p| p.1).fold(0.0, f64::max);
    let rel: Vec<[Vector3<f64>; 3]> = per_node.into_iter().map(|p| p.0).collect();
    let divergence = rel.iter().map(|w| w[0][0] + w[1][1] + w[2][2]).collect();
    Ok(RelativeDerivatives {
        rel,
        divergence,
        real_part,
    })
}

fn density_gradient(grid: &Grid, rho: &[f64], n: usize) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for axis in grid.active_axes() {
        let p = rho[grid.neighbor(n, axis, true)];
        let m = rho[grid.neighbor(n, axis, false)];
        g[axis] = (p - m) / (2.0 * grid.spacing[axis]);
    }
    g
}

/// Central-difference `ρ_t + ∇·(c₁ρ Λe₁)` at every node.
fn continuity_residual(field: &MacroField, c1: f64, rho_t: Option<&[f64]>) -> Vec<f64> {
    let grid = &field.grid;
    (0..grid.len())
        .map(|n| {
            let mut div = 0.0;
            for axis in grid.active_axes() {
                let p = grid.neighbor(n, axis, true);
                let m = grid.neighbor(n, axis, false);
                let fp = c1 * field.rho[p] * field.orientation.e1(p)[axis];
                let fm = c1 * field.rho[m] * field.orientation.e1(m)[axis];
                div += (fp - fm) / (2.0 * grid.spacing[axis]);
            }
            rho_t.map_or(0.0, |r| r[n]) + div
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixResidual {
    pub rho: Vec<f64>,
    pub lambda: Vec<Matrix3<f64>>,
    /// `max ‖R − P_{T_Λ} R‖` over the nodes.
    pub tangency_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionResidual {
    pub rho: Vec<f64>,
    pub q: Vec<Vector4<f64>>,
    /// `max |R · q|` over the nodes.
    pub orthogonality_violation: f64,
}

fn check_len<T>(v: Option<&[T]>, n: usize, what: &str) -> Result<()> {
    match v {
        Some(v) if v.len() != n => Err(Error::InvalidParameter(format!(
            "{what} has {} entries for {n} nodes",
            v.len()
        ))),
        _ => Ok(()),
    }
}

/// Left-hand sides of the density and matrix orientation equations.
///
/// Time derivatives default to zero.
pub fn residual_matrix(
    field: &MacroField,
    c: &GciConstants,
    rho_t: Option<&[f64]>,
    lambda_t: Option<&[Matrix3<f64>]>,
) -> Result<MatrixResidual> {
    let rots = field.rotations()?;
    let n_nodes = field.grid.len();
    check_len(rho_t, n_nodes, "density rate")?;
    check_len(lambda_t, n_nodes, "orientation rate")?;
    let der = orientation_derivatives(field)?;
    let rho_res = continuity_residual(field, c.c1, rho_t);
    let mut lambda = Vec::with_capacity(n_nodes);
    let mut violation = 0.0f64;
    for n in 0..n_nodes {
        let l = rots[n].matrix();
        let rho = field.rho[n];
        let e = rots[n].e1();
        let grad = density_gradient(&field.grid, &field.rho, n);
        let lt = lambda_t.map_or_else(Matrix3::zeros, |v| v[n]);
        let transport = hat(&(der.big_d[n] * e)) * l;
        let torque = e.cross(&(2.0 * c.c3 * grad + c.c4 * rho * der.r[n])) + c.c4 * rho * der.delta[n] * e;
        let res = rho * (lt + c.c2 * transport) + hat(&torque) * l;
        let tangent = 0.5 * (res - l * res.transpose() * l);
        violation = violation.max((res - tangent).norm());
        lambda.push(res);
    }
    Ok(MatrixResidual {
        rho: rho_res,
        lambda,
        tangency_violation: violation,
    })
}

/// Left-hand sides of the density and quaternion orientation equations.
///
/// Time derivatives default to zero.
pub fn residual_quaternion(
    field: &MacroField,
    c: &GciConstants,
    rho_t: Option<&[f64]>,
    q_t: Option<&[Vector4<f64>]>,
) -> Result<QuaternionResidual> {
    let quats = field.quaternions()?;
    let n_nodes = field.grid.len();
    check_len(rho_t, n_nodes, "density rate")?;
    check_len(q_t, n_nodes, "orientation rate")?;
    let der = rel_derivative(field)?;
    let rho_res = continuity_residual(field, c.c1, rho_t);
    let mut q_res = Vec::with_capacity(n_nodes);
    let mut violation = 0.0f64;
    for n in 0..n_nodes {
        let q = quats[n].coords();
        let rho = field.rho[n];
        let e = quats[n].e1();
        let grad = density_gradient(&field.grid, &field.rho, n);
        let qt = q_t.map_or_else(Vector4::zeros, |v| v[n]);
        let transport = qmul(&pure(&der.directional(n, &e)), q);
        let pressure = qmul(&pure(&e.cross(&grad)), q);
        let twist = qmul(&pure(&(der.gradient_dot(n, &e) + der.divergence[n] * e)), q);
        let res = rho * (qt + c.c2_prime * transport) + c.c3 * pressure + c.c4 * rho * twist;
        violation = violation.max(res.dot(q).abs());
        q_res.push(res);
    }
    Ok(QuaternionResidual {
        rho: rho_res,
        q: q_res,
        orthogonality_violation: violation,
    })
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroParams {
    /// Artificial viscosity: `ν h² Δ` is added per axis to both equations.
    pub nu: f64,
    /// CFL number.
    pub sigma: f64,
}

impl Default for MacroParams {
    fn default() -> Self {
        Self { nu: 0.5, sigma: 0.5 }
    }
}

/// Largest admissible `dt`: `σ h / max(c₁, c₂, c₂′, 1)`.
pub fn cfl_bound(grid: &Grid, c: &GciConstants, sigma: f64) -> f64 {
    let speed = [c.c1, c.c2, c.c2_prime.abs(), 1.0].into_iter().fold(0.0, f64::max);
    sigma * grid.min_spacing() / speed
}

/// Density rate in conservative form: `−Σⱼ (F_{j+½} − F_{j−½}) / hⱼ` with
/// `F_{j+½} = c₁ ½(ρ vⱼ + ρ₊ vⱼ₊) − ν hⱼ (ρ₊ − ρ)`.
fn density_rate(field: &MacroField, c1: f64, nu: f64) -> Vec<f64> {
    let grid = &field.grid;
    let flux = |n: usize, axis: usize| {
        let p = grid.neighbor(n, axis, true);
        let adv = 0.5
            * c1
            * (field.rho[n] * field.orientation.e1(n)[axis] + field.rho[p] * field.orientation.e1(p)[axis]);
        adv - nu * grid.spacing[axis] * (field.rho[p] - field.rho[n])
    };
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let mut rate = 0.0;
            for axis in grid.active_axes() {
                let m = grid.neighbor(n, axis, false);
                rate -= (flux(n, axis) - flux(m, axis)) / grid.spacing[axis];
            }
            rate
        })
        .collect()
}

/// `Ω` with `Λ_t = [Ω]ₓΛ`, viscosity included.
fn angular_velocity_matrix(field: &MacroField, c: &GciConstants, nu: f64) -> Result<Vec<Vector3<f64>>> {
    let rots = field.rotations()?;
    let grid = &field.grid;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|n| {
            let (big_d, _) = node_orientation_derivative(grid, rots, n);
            let l = rots[n].matrix();
            let e = rots[n].e1();
            let rho = field.rho[n];
            let grad = density_gradient(grid, &field.rho, n);
            let delta = big_d.trace();
            let r = 2.0 * vee(&big_d);
            let mut omega = -c.c2 * (big_d * e)
                - (2.0 * c.c3 / rho) * e.cross(&grad)
                - c.c4 * (e.cross(&r) + delta * e);
            for axis in grid.active_axes() {
                let p = rots[grid.neighbor(n, axis, true)].matrix();
                let m = rots[grid.neighbor(n, axis, false)].matrix();
                omega += nu * vee(&((p - 2.0 * l + m) * l.transpose()));
            }
            omega
        })
        .collect())
}

/// `Ω` with `q_t = ½Ω q`, assembled from relative derivatives and `c₂′`.
fn angular_velocity_quaternion(field: &MacroField, c: &GciConstants, nu: f64) -> Result<Vec<Vector3<f64>>> {
    let quats = field.quaternions()?;
    let grid = &field.grid;
    check_sign_continuity(grid, quats)?;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|n| {
            let (w, _) = node_rel_derivative(grid, quats, n);
            let q = quats[n].coords();
            let e = quats[n].e1();
            let rho = field.rho[n];
            let grad = density_gradient(grid, &field.rho, n);
            let directional = e[0] * w[0] + e[1] * w[1] + e[2] * w[2];
            let gradient_dot = Vector3::new(w[0].dot(&e), w[1].dot(&e), w[2].dot(&e));
            let divergence = w[0][0] + w[1][1] + w[2][2];
            let mut omega = -2.0 * c.c2_prime * directional
                - (2.0 * c.c3 / rho) * e.cross(&grad)
                - 2.0 * c.c4 * (gradient_dot + divergence * e);
            let qc = qconj(q);
            for axis in grid.active_axes() {
                let p = quats[grid.neighbor(n, axis, true)].coords();
                let m = quats[grid.neighbor(n, axis, false)].coords();
                omega += 2.0 * nu * imag(&qmul(&(p - 2.0 * q + m), &qc));
            }
            omega
        })
        .collect())
}

struct Rates {
    rho: Vec<f64>,
    omega: Vec<Vector3<f64>>,
}

fn rates(field: &MacroField, c: &GciConstants, nu: f64) -> Result<Rates> {
    if let Some(n) = field.rho.iter().position(|r| *r <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "density must stay positive, node {n} has {}",
            field.rho[n]
        )));
    }
    let omega = match field.orientation.representation() {
        Representation::Matrix => angular_velocity_matrix(field, c, nu)?,
        Representation::Quaternion => angular_velocity_quaternion(field, c, nu)?,
    };
    Ok(Rates {
        rho: density_rate(field, c.c1, nu),
        omega,
    })
}

/// `base + Σ wᵢ [Ωᵢ]ₓΛᵢ` (or `base + Σ wᵢ ½Ωᵢqᵢ`), projected back on the group.
fn advance_orientation(
    base: &OrientationField,
    stages: &[(&OrientationField, &[Vector3<f64>], f64)],
) -> Result<OrientationField> {
    match base {
        OrientationField::Matrix(b) => {
            let out: Option<Vec<Rotation>> = (0..b.len())
                .into_par_iter()
                .map(|n| {
                    let mut m = *b[n].matrix();
                    for (field, omega, w) in stages {
                        let l = field.rotation(n);
                        m += *w * hat(&omega[n]) * l.matrix();
                    }
                    retract(&m)
                })
                .collect();
            out.map(OrientationField::Matrix)
                .ok_or_else(|| Error::DegenerateAverage("orientation update left SO(3)".into()))
        }
        OrientationField::Quaternion(b) => {
            let out = (0..b.len())
                .into_par_iter()
                .map(|n| {
                    let mut v = *b[n].coords();
                    for (field, omega, w) in stages {
                        let q = match field {
                            OrientationField::Quaternion(q) => q[n],
                            OrientationField::Matrix(_) => unreachable!("stages share the representation"),
                        };
                        v += 0.5 * *w * qmul(&pure(&omega[n]), q.coords());
                    }
                    UnitQuaternion::from_vector_normalize(v)
                })
                .collect();
            Ok(OrientationField::Quaternion(out))
        }
    }
}

/// One Heun (second-order Runge–Kutta) step of the macroscopic system.
///
/// Each stage re-projects orientations on SO(3) or the unit sphere; density
/// fluxes telescope so total mass is conserved.
pub fn step_macro(field: &MacroField, dt: f64, c: &GciConstants, params: &MacroParams) -> Result<MacroField> {
    let bound = cfl_bound(&field.grid, c, params.sigma);
    if !(dt > 0.0 && dt <= bound) {
        return Err(Error::CflViolation { dt, bound });
    }
    let k1 = rates(field, c, params.nu)?;
    let stage = MacroField {
        grid: field.grid,
        t: field.t + dt,
        rho: field.rho.iter().zip(&k1.rho).map(|(r, k)| r + dt * k).collect(),
        orientation: advance_orientation(&field.orientation, &[(&field.orientation, &k1.omega, dt)])?,
    };
    let k2 = rates(&stage, c, params.nu)?;
    let rho = field
        .rho
        .iter()
        .zip(k1.rho.iter().zip(&k2.rho))
        .map(|(r, (a, b))| r + 0.5 * dt * (a + b))
        .collect();
    let orientation = advance_orientation(
        &field.orientation,
        &[
            (&field.orientation, &k1.omega, 0.5 * dt),
            (&stage.orientation, &k2.omega, 0.5 * dt),
        ],
    )?;
    Ok(MacroField {
        grid: field.grid,
        t: field.t + dt,
        rho,
        orientation,
    })
}

/// Runs `steps` steps of size `dt`.
pub fn run_macro(
    field: &MacroField,
    dt: f64,
    steps: usize,
    c: &GciConstants,
    params: &MacroParams,
) -> Result<MacroField> {
    let mut f = field.clone();
    for _ in 0..steps {
        f = step_macro(&f, dt, c, params)?;
    }
    Ok(f)
}

/// `max ‖Φ(qₙ) − Λₙ‖_F` between a quaternion and a matrix field on the same grid.
pub fn representation_gap(quaternion: &MacroField, matrix: &MacroField) -> Result<f64> {
    let q = quaternion.quaternions()?;
    let m = matrix.rotations()?;
    if q.len() != m.len() {
        return Err(Error::InvalidParameter("fields live on different grids".into()));
    }
    Ok(q.iter()
        .zip(m)
        .map(|(q, l)| (quat_to_rot(q).matrix() - l.matrix()).norm())
        .fold(0.0, f64::max))
}
