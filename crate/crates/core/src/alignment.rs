//! Observation kernels, periodic cell lists and target orientations.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::rotations::{
    max_eigvec_with, polar_rotation_with, qtensor, QTensor, Rotation, Thresholds, UnitQuaternion,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    /// Indicator of the ball of radius R.
    Indicator,
    /// `exp(−1/(1 − |x|²/R²))` inside the ball.
    SmoothBump,
}

/// Radially symmetric kernel of compact support, normalized to unit mass on ℝ³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    radius: f64,
    shape: KernelShape,
    norm: f64,
}

impl Kernel {
    pub fn new(radius: f64, shape: KernelShape) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel radius must be positive, got {radius}"
            )));
        }
        let mass = match shape {
            KernelShape::Indicator => 4.0 / 3.0 * PI * radius.powi(3),
            KernelShape::SmoothBump => {
                let radial = adaptive_simpson(|s| s * s * bump(s * s), 0.0, 1.0, 1e-13);
                4.0 * PI * radius.powi(3) * radial
            }
        };
        Ok(Self {
            radius,
            shape,
            norm: 1.0 / mass,
        })
    }

    pub fn indicator(radius: f64) -> Result<Self> {
        Self::new(radius, KernelShape::Indicator)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    /// Kernel value at squared distance `r2`.
    pub fn weight(&self, r2: f64) -> f64 {
        let s2 = r2 / (self.radius * self.radius);
        if s2 > 1.0 {
            return 0.0;
        }
        match self.shape {
            KernelShape::Indicator => self.norm,
            KernelShape::SmoothBump => self.norm * bump(s2),
        }
    }
}

fn bump(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s2)).exp()
    }
}

/// Periodic box `[0, L₀) × [0, L₁) × [0, L₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBox {
    pub lengths: [f64; 3],
}

impl PeriodicBox {
    pub fn new(lengths: [f64; 3]) -> Result<Self> {
        if lengths.iter().all(|l| *l > 0.0 && l.is_finite()) {
            Ok(Self { lengths })
        } else {
            Err(Error::InvalidParameter(format!(
                "box lengths must be positive, got {lengths:?}"
            )))
        }
    }

    pub fn cube(l: f64) -> Result<Self> {
        Self::new([l; 3])
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Wraps `x` into the box.
    pub fn wrap(&self, x: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            let l = self.lengths[i];
            let w = x[i].rem_euclid(l);
            // rem_euclid can round up to l itself
            if w >= l {
                0.0
            } else {
                w
            }
        })
    }

    /// Minimum-image displacement `b − a`.
    pub fn displacement(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            let l = self.lengths[i];
            let d = b[i] - a[i];
            d - l * round_nearest(d / l)
        })
    }
}

/// Round to nearest (ties to even) for `|x| < 2⁵¹`. Branch-free, unlike `f64::round`,
/// which is a libm call on baseline x86-64; the minimum-image loop is dominated by it.
#[inline]
fn round_nearest(x: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 · 2⁵²
    (x + SHIFT) - SHIFT
}

/// Cell list over a periodic box, stored as a bucket-sorted index array.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pbox: PeriodicBox,
    radius: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
    cell_of: Vec<usize>,
    stencils: Vec<Vec<usize>>,
}

impl CellGrid {
    /// Buckets `positions` (already wrapped) into cells of side at least `radius`.
    pub fn build(positions: &[Vector3<f64>], pbox: &PeriodicBox, radius: f64) -> Result<Self> {
        for &length in &pbox.lengths {
            if length < 2.0 * radius {
                return Err(Error::BoxTooSmall { length, radius });
            }
        }
        let dims = pbox.lengths.map(|l| ((l / radius).floor() as usize).max(1));
        let ncells = dims[0] * dims[1] * dims[2];
        let cell_of: Vec<usize> = positions
            .iter()
            .map(|x| cell_index(&dims, &cell_coords(&dims, &pbox.lengths, x)))
            .collect();
        let mut starts = vec![0usize; ncells + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..ncells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0usize; positions.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        let stencils = (0..ncells)
            .map(|c| {
                let (ix, iy, iz) = (c % dims[0], (c / dims[0]) % dims[1], c / (dims[0] * dims[1]));
                let mut cells = Vec::with_capacity(27);
                for dz in [-1i64, 0, 1] {
                    for dy in [-1i64, 0, 1] {
                        for dx in [-1i64, 0, 1] {
                            let n = [
                                (ix as i64 + dx).rem_euclid(dims[0] as i64) as usize,
                                (iy as i64 + dy).rem_euclid(dims[1] as i64) as usize,
                                (iz as i64 + dz).rem_euclid(dims[2] as i64) as usize,
                            ];
                            cells.push(cell_index(&dims, &n));
                        }
                    }
                }
                // fewer than three cells along an axis makes the stencil wrap onto itself
                cells.sort_unstable();
                cells.dedup();
                cells
            })
            .collect();
        Ok(Self {
            pbox: *pbox,
            radius,
            dims,
            starts,
            order,
            cell_of,
            stencils,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn periodic_box(&self) -> &PeriodicBox {
        &self.pbox
    }

    /// Particles stored in cell `c`.
    pub fn bucket(&self, c: usize) -> &[usize] {
        &self.order[self.starts[c]..self.starts[c + 1]]
    }

    pub fn cell_count(&self) -> usize {
        self.starts.len() - 1
    }

    /// Calls `visit(m, r2)` for every particle within `radius` of `x`, including
    /// the particle at `x` itself when it belongs to the grid.
    pub fn for_each_neighbor<F: FnMut(usize, f64)>(
        &self,
        positions: &[Vector3<f64>],
        x: &Vector3<f64>,
        mut visit: F,
    ) {
        let c = cell_index(&self.dims, &cell_coords(&self.dims, &self.pbox.lengths, x));
        let r2max = self.radius * self.radius;
        for &cell in &self.stencils[c] {
            for &m in self.bucket(cell) {
                let r2 = self.pbox.displacement(x, &positions[m]).norm_squared();
                if r2 <= r2max {
                    visit(m, r2);
                }
            }
        }
    }

    /// Sorted indices of the particles within `radius` of particle `n` (self included).
    pub fn neighbors(&self, positions: &[Vector3<f64>], n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_neighbor(positions, &positions[n], |m, _| out.push(m));
        out.sort_unstable();
        out
    }

    /// Cell holding particle `n` at build time.
    pub fn cell_of(&self, n: usize) -> usize {
        self.cell_of[n]
    }
}

fn cell_coords(dims: &[usize; 3], lengths: &[f64; 3], x: &Vector3<f64>) -> [usize; 3] {
    std::array::from_fn(|i| {
        let c = (x[i] / lengths[i] * dims[i] as f64).floor();
        (c.max(0.0) as usize).min(dims[i] - 1)
    })
}

fn cell_index(dims: &[usize; 3], c: &[usize; 3]) -> usize {
    c[0] + dims[0] * (c[1] + dims[1] * c[2])
}

/// Brute-force neighbor list, the reference for [`CellGrid::neighbors`].
pub fn neighbors_brute_force(
    positions: &[Vector3<f64>],
    pbox: &PeriodicBox,
    radius: f64,
    n: usize,
) -> Vec<usize> {
    let r2max = radius * radius;
    (0..positions.len())
        .filter(|&m| pbox.displacement(&positions[n], &positions[m]).norm_squared() <= r2max)
        .collect()
}

/// Anything that can report the neighbors of a point with their squared distances.
pub trait NeighborSource {
    fn visit<F: FnMut(usize, f64)>(&self, positions: &[Vector3<f64>], x: &Vector3<f64>, f: F);
}

impl NeighborSource for CellGrid {
    fn visit<F: FnMut(usize, f64)>(&self, positions: &[Vector3<f64>], x: &Vector3<f64>, f: F) {
        self.for_each_neighbor(positions, x, f)
    }
}

/// All-pairs scan, used where the configuration changes between every query.
#[derive(Debug, Clone, Copy)]
pub struct AllPairs {
    pub pbox: PeriodicBox,
    pub radius: f64,
}

impl NeighborSource for AllPairs {
    fn visit<F: FnMut(usize, f64)>(&self, positions: &[Vector3<f64>], x: &Vector3<f64>, mut f: F) {
        let r2max = self.radius * self.radius;
        for (m, y) in positions.iter().enumerate() {
            let r2 = self.pbox.displacement(x, y).norm_squared();
            if r2 <= r2max {
                f(m, r2);
            }
        }
    }
}

/// `J̄ₙ = (1/N) Σₘ K(Xₘ − Xₙ) Aₘ`, self included.
pub fn average_matrix<S: NeighborSource>(
    n: usize,
    positions: &[Vector3<f64>],
    orientations: &[Rotation],
    neighbors: &S,
    kernel: &Kernel,
) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    neighbors.visit(positions, &positions[n], |m, r2| {
        j += kernel.weight(r2) * orientations[m].matrix();
    });
    j / positions.len() as f64
}

/// `Q̄ₙ = (1/N) Σₘ K(Xₘ − Xₙ) Ψ(qₘ)`, self included.
pub fn average_qtensor<S: NeighborSource>(
    n: usize,
    positions: &[Vector3<f64>],
    orientations: &[UnitQuaternion],
    neighbors: &S,
    kernel: &Kernel,
) -> QTensor {
    let mut q = QTensor::zero();
    neighbors.visit(positions, &positions[n], |m, r2| {
        q.add_scaled(kernel.weight(r2), &qtensor(&orientations[m]));
    });
    q.scaled(1.0 / positions.len() as f64)
}

/// Target orientation `Āₙ = PD(J̄ₙ)`.
pub fn target_rotation<S: NeighborSource>(
    n: usize,
    positions: &[Vector3<f64>],
    orientations: &[Rotation],
    neighbors: &S,
    kernel: &Kernel,
    thresholds: &Thresholds,
) -> Result<Rotation> {
    let j = average_matrix(n, positions, orientations, neighbors, kernel);
    polar_rotation_with(&j, thresholds)
}

/// Target orientation `q̄ₙ`, the leading eigenvector of `Q̄ₙ`.
pub fn target_quaternion<S: NeighborSource>(
    n: usize,
    positions: &[Vector3<f64>],
    orientations: &[UnitQuaternion],
    neighbors: &S,
    kernel: &Kernel,
    thresholds: &Thresholds,
) -> Result<UnitQuaternion> {
    let q = average_qtensor(n, positions, orientations, neighbors, kernel);
    max_eigvec_with(&q, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::{mat_dot, quat_to_rot};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_positions(rng: &mut ChaCha8Rng, n: usize, pbox: &PeriodicBox) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::from_fn(|i, _| rng.random::<f64>() * pbox.lengths[i]))
            .collect()
    }

    #[test]
    fn two_particles_at_the_radius() {
        let pbox = PeriodicBox::cube(5.0).unwrap();
        let r = 1.0;
        for (gap, expected) in [(r - 1e-9, true), (r + 1e-9, false)] {
            // straddle the periodic boundary as well
            let pos = vec![Vector3::new(0.2, 1.0, 1.0), pbox.wrap(&Vector3::new(0.2 - gap, 1.0, 1.0))];
            let grid = CellGrid::build(&pos, &pbox, r).unwrap();
            assert_eq!(grid.neighbors(&pos, 0).contains(&1), expected);
            assert_eq!(grid.neighbors(&pos, 1).contains(&0), expected);
        }
    }

    #[test]
    fn box_too_small_is_rejected() {
        let pbox = PeriodicBox::new([3.0, 1.5, 3.0]).unwrap();
        assert!(matches!(
            CellGrid::build(&[], &pbox, 1.0),
            Err(Error::BoxTooSmall { .. })
        ));
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for lengths in [[4.0, 4.0, 4.0], [2.0, 2.5, 7.3], [10.0, 3.0, 2.0]] {
            let pbox = PeriodicBox::new(lengths).unwrap();
            let pos = random_positions(&mut rng, 200, &pbox);
            let grid = CellGrid::build(&pos, &pbox, 1.0).unwrap();
            for n in 0..pos.len() {
                assert_eq!(grid.neighbors(&pos, n), neighbors_brute_force(&pos, &pbox, 1.0, n));
            }
        }
    }

    #[test]
    fn every_particle_in_exactly_one_bucket() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pbox = PeriodicBox::cube(6.0).unwrap();
        let pos = random_positions(&mut rng, 500, &pbox);
        let grid = CellGrid::build(&pos, &pbox, 1.3).unwrap();
        let mut seen = vec![0; pos.len()];
        for c in 0..grid.cell_count() {
            for &m in grid.bucket(c) {
                seen[m] += 1;
                assert_eq!(grid.cell_of(m), c);
            }
        }
        assert!(seen.iter().all(|s| *s == 1));
    }

    #[test]
    fn kernels_have_unit_mass() {
        for shape in [KernelShape::Indicator, KernelShape::SmoothBump] {
            let k = Kernel::new(0.7, shape).unwrap();
            let mass = adaptive_simpson(|r| 4.0 * PI * r * r * k.weight(r * r), 0.0, 0.7, 1e-12);
            assert!((mass - 1.0).abs() < 1e-9, "{shape:?}: {mass}");
        }
    }

    #[test]
    fn common_orientation_is_its_own_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pbox = PeriodicBox::cube(3.0).unwrap();
        let pos = random_positions(&mut rng, 30, &pbox);
        let q = UnitQuaternion::uniform(&mut rng);
        let a = quat_to_rot(&q);
        let mats = vec![a; pos.len()];
        let quats: Vec<UnitQuaternion> = (0..pos.len())
            .map(|i| if i % 2 == 0 { q } else { -q })
            .collect();
        let grid = CellGrid::build(&pos, &pbox, 1.0).unwrap();
        let k = Kernel::indicator(1.0).unwrap();
        let th = Thresholds::default();
        for n in 0..pos.len() {
            let t = target_rotation(n, &pos, &mats, &grid, &k, &th).unwrap();
            assert!((t.matrix() - a.matrix()).amax() < 1e-12);
            let tq = target_quaternion(n, &pos, &quats, &grid, &k, &th).unwrap();
            assert!((tq.dot(&q).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn target_is_the_maximizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let pbox = PeriodicBox::cube(2.0).unwrap();
        let pos = vec![Vector3::new(0.5, 0.5, 0.5), Vector3::new(0.7, 0.5, 0.5)];
        let r = Rotation::from_axis_angle(&Vector3::new(0.0, 0.0, 1.0), 1.0);
        let mats = vec![r, r.transpose()];
        let k = Kernel::indicator(1.0).unwrap();
        let grid = CellGrid::build(&pos, &pbox, 1.0).unwrap();
        let j = average_matrix(0, &pos, &mats, &grid, &k);
        let t = target_rotation(0, &pos, &mats, &grid, &k, &Thresholds::default()).unwrap();
        let best = mat_dot(t.matrix(), &j);
        for _ in 0..1000 {
            assert!(mat_dot(Rotation::uniform(&mut rng).matrix(), &j) <= best + 1e-12);
        }
    }

    #[test]
    fn opposing_half_turns_are_degenerate() {
        let pbox = PeriodicBox::cube(2.0).unwrap();
        let pos = vec![Vector3::new(0.5, 0.5, 0.5); 3];
        // I + diag(1,−1,−1) + diag(−1,1,−1) = diag(1,1,−1)
        let mats = vec![
            Rotation::identity(),
            Rotation::from_axis_angle(&Vector3::x(), PI),
            Rotation::from_axis_angle(&Vector3::y(), PI),
        ];
        let k = Kernel::indicator(1.0).unwrap();
        let grid = CellGrid::build(&pos, &pbox, 1.0).unwrap();
        let j = average_matrix(0, &pos, &mats, &grid, &k);
        let c = j[(0, 0)];
        assert!((j - c * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).amax() < 1e-14);
        assert!(matches!(
            target_rotation(0, &pos, &mats, &grid, &k, &Thresholds::default()),
            Err(Error::DegenerateAverage(_))
        ));
    }
}
