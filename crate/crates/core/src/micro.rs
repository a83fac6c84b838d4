//! Particle dynamics: gradual alignment (SDE) and jump alignment (PDMP).
//!
//! Both models run in either representation. The matrix and quaternion paths share
//! one generic implementation over [`Body`], so they consume random numbers in the
//! same order wherever the two laws allow it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    target_quaternion, target_rotation, AllPairs, CellGrid, Kernel, NeighborSource, PeriodicBox,
};
use crate::error::{Error, Result};
use crate::rng::{purpose, CounterRng};
use crate::rotations::{
    mat_dot, quat_to_rot, retract_tangent, rot_to_quat, vee, Rotation, Thresholds,
    UnitQuaternion,
};
use crate::sampling::VonMises;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gradual,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Matrix,
    Quaternion,
}

/// A prescribed constant orientation field, kept in both representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub rot: Rotation,
    pub quat: UnitQuaternion,
}

impl Field {
    pub fn new(rot: Rotation) -> Self {
        Self {
            rot,
            quat: rot_to_quat(&rot),
        }
    }

    pub fn from_quat(quat: UnitQuaternion) -> Self {
        Self {
            rot: quat_to_rot(&quat),
            quat,
        }
    }
}

/// Operations the dynamics need from an orientation representation.
pub trait Body: Copy + Send + Sync + 'static {
    const REPRESENTATION: Representation;
    /// Stream purpose for gradual-model noise, distinct per representation.
    const NOISE: u8;

    /// Direction of motion.
    fn e1(&self) -> Vector3<f64>;

    fn target<S: NeighborSource>(
        n: usize,
        positions: &[Vector3<f64>],
        orientations: &[Self],
        neighbors: &S,
        kernel: &Kernel,
        thresholds: &Thresholds,
    ) -> Result<Self>;

    /// One Euler tangent step toward `target`, retracted onto the group.
    fn gradual_update<R: Rng + ?Sized>(&self, target: &Self, d: f64, dt: f64, rng: &mut R)
        -> Self;

    /// `target · η` where `η` is the rotation by `theta` about `axis`.
    fn jump_update(target: &Self, theta: f64, axis: &Vector3<f64>) -> Self;

    /// The field in this representation.
    fn of_field(field: &Field) -> Self;

    /// `Λ · A`, or `2(q_Λ·q)² − ½` for quaternions.
    fn alignment(&self, field: &Field) -> f64;

    fn to_rotation(&self) -> Rotation;

    fn wrap_vec(v: Vec<Self>) -> Orientations;

    fn unwrap_slice(o: &Orientations) -> Option<&[Self]>;

    fn unwrap_vec(o: &mut Orientations) -> Option<&mut Vec<Self>>;
}

impl Body for Rotation {
    const REPRESENTATION: Representation = Representation::Matrix;
    const NOISE: u8 = purpose::NOISE_MATRIX;

    fn e1(&self) -> Vector3<f64> {
        Rotation::e1(self)
    }

    fn target<S: NeighborSource>(
        n: usize,
        positions: &[Vector3<f64>],
        orientations: &[Self],
        neighbors: &S,
        kernel: &Kernel,
        thresholds: &Thresholds,
    ) -> Result<Self> {
        target_rotation(n, positions, orientations, neighbors, kernel, thresholds)
    }

    fn gradual_update<R: Rng + ?Sized>(&self, target: &Self, d: f64, dt: f64, rng: &mut R) -> Self {
        let scale = 2.0 * d.sqrt() * dt.sqrt();
        let db = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        // P_T(X) = A skew(AᵀX), so the retracted step only needs the axial vector of AᵀX.
        let w = vee(&self.matrix().tr_mul(&(target.matrix() * dt + scale * db)));
        retract_tangent(self, &w)
    }

    fn jump_update(target: &Self, theta: f64, axis: &Vector3<f64>) -> Self {
        target * &Rotation::from_axis_angle(axis, theta)
    }

    fn of_field(field: &Field) -> Self {
        field.rot
    }

    fn alignment(&self, field: &Field) -> f64 {
        mat_dot(field.rot.matrix(), self.matrix())
    }

    fn to_rotation(&self) -> Rotation {
        *self
    }

    fn wrap_vec(v: Vec<Self>) -> Orientations {
        Orientations::Matrix(v)
    }

    fn unwrap_slice(o: &Orientations) -> Option<&[Self]> {
        match o {
            Orientations::Matrix(v) => Some(v),
            Orientations::Quaternion(_) => None,
        }
    }

    fn unwrap_vec(o: &mut Orientations) -> Option<&mut Vec<Self>> {
        match o {
            Orientations::Matrix(v) => Some(v),
            Orientations::Quaternion(_) => None,
        }
    }
}

impl Body for UnitQuaternion {
    const REPRESENTATION: Representation = Representation::Quaternion;
    const NOISE: u8 = purpose::NOISE_QUATERNION;

    fn e1(&self) -> Vector3<f64> {
        UnitQuaternion::e1(self)
    }

    fn target<S: NeighborSource>(
        n: usize,
        positions: &[Vector3<f64>],
        orientations: &[Self],
        neighbors: &S,
        kernel: &Kernel,
        thresholds: &Thresholds,
    ) -> Result<Self> {
        target_quaternion(n, positions, orientations, neighbors, kernel, thresholds)
    }

    fn gradual_update<R: Rng + ?Sized>(&self, target: &Self, d: f64, dt: f64, rng: &mut R) -> Self {
        let q = self.coords();
        let t = target.coords();
        let scale = (0.5 * d).sqrt() * dt.sqrt();
        let db = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let v = (t * t.dot(q) - 0.25 * q) * dt + scale * db;
        let inc = v - q * q.dot(&v);
        UnitQuaternion::from_vector_normalize(q + inc)
    }

    fn jump_update(target: &Self, theta: f64, axis: &Vector3<f64>) -> Self {
        *target * UnitQuaternion::from_axis_angle(axis, theta)
    }

    fn of_field(field: &Field) -> Self {
        field.quat
    }

    fn alignment(&self, field: &Field) -> f64 {
        2.0 * self.dot(&field.quat).powi(2) - 0.5
    }

    fn to_rotation(&self) -> Rotation {
        quat_to_rot(self)
    }

    fn wrap_vec(v: Vec<Self>) -> Orientations {
        Orientations::Quaternion(v)
    }

    fn unwrap_slice(o: &Orientations) -> Option<&[Self]> {
        match o {
            Orientations::Quaternion(v) => Some(v),
            Orientations::Matrix(_) => None,
        }
    }

    fn unwrap_vec(o: &mut Orientations) -> Option<&mut Vec<Self>> {
        match o {
            Orientations::Quaternion(v) => Some(v),
            Orientations::Matrix(_) => None,
        }
    }
}

/// Orientation payload of a particle system, tagged by representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Orientations {
    Matrix(Vec<Rotation>),
    Quaternion(Vec<UnitQuaternion>),
}

impl Orientations {
    pub fn len(&self) -> usize {
        match self {
            Orientations::Matrix(v) => v.len(),
            Orientations::Quaternion(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn representation(&self) -> Representation {
        match self {
            Orientations::Matrix(_) => Representation::Matrix,
            Orientations::Quaternion(_) => Representation::Quaternion,
        }
    }

    pub fn e1(&self, n: usize) -> Vector3<f64> {
        match self {
            Orientations::Matrix(v) => v[n].e1(),
            Orientations::Quaternion(v) => v[n].e1(),
        }
    }

    /// Rotation matrix of particle `n` (through `Φ` for quaternions).
    pub fn rotation(&self, n: usize) -> Rotation {
        match self {
            Orientations::Matrix(v) => v[n],
            Orientations::Quaternion(v) => quat_to_rot(&v[n]),
        }
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        (0..self.len()).map(|n| self.rotation(n)).collect()
    }

    /// Alignment of particle `n` with a field, in this representation's own formula.
    pub fn alignment(&self, n: usize, field: &Field) -> f64 {
        match self {
            Orientations::Matrix(v) => v[n].alignment(field),
            Orientations::Quaternion(v) => v[n].alignment(field),
        }
    }

    /// Largest violation of the representation invariant.
    pub fn invariant_error(&self) -> f64 {
        match self {
            Orientations::Matrix(v) => v
                .iter()
                .map(|r| r.orthogonality_error().max((r.matrix().determinant() - 1.0).abs()))
                .fold(0.0, f64::max),
            Orientations::Quaternion(v) => v
                .iter()
                .map(|q| (q.coords().norm() - 1.0).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Positions and orientations of `N` particles in a periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    /// Completed gradual steps; keys the per-step noise streams.
    pub step: u64,
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Orientations,
    /// Pending jump times (jump model only), each strictly after `t`.
    pub next_jump: Option<Vec<f64>>,
}

impl ParticleState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// How initial orientations are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialOrientations {
    Uniform,
    Identical(UnitQuaternion),
    VonMises { center: UnitQuaternion, d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub n: usize,
    pub d: f64,
    pub pbox: PeriodicBox,
    pub kernel: Kernel,
    /// Time step of the gradual model.
    pub dt: f64,
    pub model: Model,
    pub representation: Representation,
    pub seed: u64,
    pub thresholds: Thresholds,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidParameter(format!("D must be positive, got {}", self.d)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        for &length in &self.pbox.lengths {
            if length < 2.0 * self.kernel.radius() {
                return Err(Error::BoxTooSmall {
                    length,
                    radius: self.kernel.radius(),
                });
            }
        }
        Ok(())
    }
}

/// Counters reported alongside a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub events: u64,
    /// Targets replaced by the particle's own orientation because the average was degenerate.
    pub degenerate: u64,
}

/// Uniform positions and the requested orientations, drawn from the `INIT` stream.
///
/// Orientations are drawn as quaternions and mapped through `Φ` for the matrix
/// representation, so both representations start from the same configuration.
pub fn initial_state(
    params: &SimParams,
    init: InitialOrientations,
    rng: &CounterRng,
) -> Result<ParticleState> {
    params.validate()?;
    let mut r = rng.stream(CounterRng::id(purpose::INIT, 0));
    let positions: Vec<Vector3<f64>> = (0..params.n)
        .map(|_| Vector3::from_fn(|i, _| r.random::<f64>() * params.pbox.lengths[i]))
        .map(|x| params.pbox.wrap(&x))
        .collect();
    let vm = match init {
        InitialOrientations::VonMises { d, .. } => Some(VonMises::new(d)?),
        _ => None,
    };
    let quats: Vec<UnitQuaternion> = (0..params.n)
        .map(|_| match init {
            InitialOrientations::Uniform => UnitQuaternion::uniform(&mut r),
            InitialOrientations::Identical(q) => q,
            InitialOrientations::VonMises { center, .. } => vm
                .as_ref()
                .expect("sampler built above")
                .sample_quat(&center, &mut r),
        })
        .collect();
    let orientations = match params.representation {
        Representation::Matrix => Orientations::Matrix(quats.iter().map(quat_to_rot).collect()),
        Representation::Quaternion => Orientations::Quaternion(quats),
    };
    Ok(ParticleState {
        t: 0.0,
        step: 0,
        positions,
        orientations,
        next_jump: None,
    })
}

fn step_gradual_generic<B: Body>(
    state: &mut ParticleState,
    params: &SimParams,
    rng: &CounterRng,
    stats: &mut RunStats,
) -> Result<()> {
    let grid = CellGrid::build(&state.positions, &params.pbox, params.kernel.radius())?;
    let positions = &state.positions;
    let step = state.step;
    let orient = B::unwrap_slice(&state.orientations).ok_or(Error::WrongRepresentation {
        expected: representation_name(B::REPRESENTATION),
    })?;
    let updated: Vec<(B, bool)> = (0..orient.len())
        .into_par_iter()
        .map(|n| {
            let (target, degenerate) = match B::target(
                n,
                positions,
                orient,
                &grid,
                &params.kernel,
                &params.thresholds,
            ) {
                Ok(t) => (t, false),
                Err(_) => (orient[n], true),
            };
            let mut r = rng.stream_at(CounterRng::id(B::NOISE, n as u64), step);
            (orient[n].gradual_update(&target, params.d, params.dt, &mut r), degenerate)
        })
        .collect();
    let dt = params.dt;
    let orient = B::unwrap_vec(&mut state.orientations).expect("checked above");
    for (n, (b, degenerate)) in updated.into_iter().enumerate() {
        orient[n] = b;
        state.positions[n] = params.pbox.wrap(&(state.positions[n] + dt * b.e1()));
        stats.degenerate += degenerate as u64;
    }
    state.step += 1;
    state.t = state.step as f64 * dt;
    stats.steps += 1;
    Ok(())
}

fn representation_name(r: Representation) -> &'static str {
    match r {
        Representation::Matrix => "matrix",
        Representation::Quaternion => "quaternion",
    }
}

/// One synchronous gradual-alignment step in the matrix representation.
///
/// All targets are computed from the frozen configuration, then every particle takes
/// a projected Euler step with its own noise stream (keyed by particle and step),
/// is retracted onto SO(3), and moves by `dt · A e₁`.
pub fn step_gradual_matrix(
    state: &mut ParticleState,
    params: &SimParams,
    rng: &CounterRng,
    stats: &mut RunStats,
) -> Result<()> {
    step_gradual_generic::<Rotation>(state, params, rng, stats)
}

/// One synchronous gradual-alignment step in the quaternion representation.
pub fn step_gradual_quat(
    state: &mut ParticleState,
    params: &SimParams,
    rng: &CounterRng,
    stats: &mut RunStats,
) -> Result<()> {
    step_gradual_generic::<UnitQuaternion>(state, params, rng, stats)
}

/// Dispatches on the state's representation.
pub fn step_gradual(
    state: &mut ParticleState,
    params: &SimParams,
    rng: &CounterRng,
    stats: &mut RunStats,
) -> Result<()> {
    match state.orientations.representation() {
        Representation::Matrix => step_gradual_matrix(state, params, rng, stats),
        Representation::Quaternion => step_gradual_quat(state, params, rng, stats),
    }
}

/// One orientation jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub particle: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    t: f64,
    n: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    // reversed so the max-heap pops the earliest time, then the lowest index
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.n.cmp(&self.n))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Event-driven jump process.
///
/// Each particle owns a persistent stream from which it draws, in order, its first
/// waiting time and then, at every jump, the von Mises angle, the axis, and the next
/// waiting time. Matrix and quaternion runs with one seed therefore make identical
/// draws and stay related by `Φ` up to round-off.
#[derive(Debug, Clone)]
pub struct JumpProcess {
    state: ParticleState,
    params: SimParams,
    queue: BinaryHeap<Pending>,
    streams: Vec<ChaCha8Rng>,
    sampler: VonMises,
    stats: RunStats,
    log: Vec<JumpEvent>,
}

impl JumpProcess {
    pub fn new(mut state: ParticleState, params: &SimParams, rng: &CounterRng) -> Result<Self> {
        params.validate()?;
        let n = state.len();
        let mut streams: Vec<ChaCha8Rng> = (0..n)
            .map(|i| rng.stream(CounterRng::id(purpose::JUMP, i as u64)))
            .collect();
        let times: Vec<f64> = match state.next_jump.take() {
            Some(times) if times.len() == n && times.iter().all(|t| *t > state.t) => times,
            Some(_) => {
                return Err(Error::InvalidParameter(
                    "next-jump times must exceed the current time".into(),
                ))
            }
            None => streams.iter_mut().map(|r| state.t + exponential(r)).collect(),
        };
        let queue = times
            .iter()
            .enumerate()
            .map(|(n, &t)| Pending { t, n })
            .collect();
        state.next_jump = Some(times);
        Ok(Self {
            state,
            params: *params,
            queue,
            streams,
            sampler: VonMises::new(params.d)?,
            stats: RunStats::default(),
            log: Vec::new(),
        })
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    pub fn into_state(self) -> ParticleState {
        self.state
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn log(&self) -> &[JumpEvent] {
        &self.log
    }

    /// Runs until `t_end`, calling `observe` after every jump with the updated state.
    pub fn run_until<F: FnMut(&ParticleState, &JumpEvent)>(
        &mut self,
        t_end: f64,
        mut observe: F,
    ) -> Result<()> {
        match self.state.orientations.representation() {
            Representation::Matrix => self.run_generic::<Rotation, F>(t_end, &mut observe),
            Representation::Quaternion => {
                self.run_generic::<UnitQuaternion, F>(t_end, &mut observe)
            }
        }
    }

    fn run_generic<B: Body, F: FnMut(&ParticleState, &JumpEvent)>(
        &mut self,
        t_end: f64,
        observe: &mut F,
    ) -> Result<()> {
        let pairs = AllPairs {
            pbox: self.params.pbox,
            radius: self.params.kernel.radius(),
        };
        while let Some(&next) = self.queue.peek() {
            if next.t > t_end {
                break;
            }
            self.queue.pop();
            self.transport(next.t);
            let n = next.n;
            let orient = B::unwrap_slice(&self.state.orientations).expect("representation fixed");
            let (target, degenerate) = match B::target(
                n,
                &self.state.positions,
                orient,
                &pairs,
                &self.params.kernel,
                &self.params.thresholds,
            ) {
                Ok(t) => (t, false),
                Err(_) => (orient[n], true),
            };
            let rng = &mut self.streams[n];
            let (theta, axis) = self.sampler.sample_angle_axis(rng);
            let wait = exponential(rng);
            B::unwrap_vec(&mut self.state.orientations).expect("representation fixed")[n] =
                B::jump_update(&target, theta, &axis);
            let t_next = next.t + wait;
            self.queue.push(Pending { t: t_next, n });
            if let Some(times) = self.state.next_jump.as_mut() {
                times[n] = t_next;
            }
            self.stats.events += 1;
            self.stats.degenerate += degenerate as u64;
            let event = JumpEvent {
                t: next.t,
                particle: n,
                degenerate,
            };
            self.log.push(event);
            observe(&self.state, &event);
        }
        if t_end > self.state.t {
            self.transport(t_end);
        }
        Ok(())
    }

    /// Ballistic motion of every particle up to time `t`.
    fn transport(&mut self, t: f64) {
        let tau = t - self.state.t;
        for n in 0..self.state.len() {
            let v = self.state.orientations.e1(n);
            self.state.positions[n] = self.params.pbox.wrap(&(self.state.positions[n] + tau * v));
        }
        self.state.t = t;
    }
}

/// Runs the jump model from `state` to `t_end`, returning the final state, event log and counters.
pub fn run_jump(
    state: ParticleState,
    params: &SimParams,
    rng: &CounterRng,
    t_end: f64,
) -> Result<(ParticleState, Vec<JumpEvent>, RunStats)> {
    let mut process = JumpProcess::new(state, params, rng)?;
    process.run_until(t_end, |_, _| {})?;
    let stats = process.stats;
    let log = std::mem::take(&mut process.log);
    Ok((process.into_state(), log, stats))
}

/// Setup of a single particle in a constant prescribed field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleConfig {
    pub model: Model,
    pub representation: Representation,
    pub d: f64,
    /// Gradual time step.
    pub dt: f64,
    pub t_end: f64,
    /// States before this time are not recorded.
    pub burn_in: f64,
    /// Gradual model: record every this many steps. Ignored by the jump model, which
    /// records every post-jump state.
    pub record_every: u64,
}

/// Recorded states of a single-particle run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Orientations,
}

impl Trajectory {
    /// Field alignment of every recorded state.
    pub fn alignments(&self, field: &Field) -> Vec<f64> {
        (0..self.times.len())
            .map(|k| self.orientations.alignment(k, field))
            .collect()
    }

    /// Rotation angle of `ΛᵀA` for every recorded state.
    pub fn angles(&self, field: &Field) -> Vec<f64> {
        (0..self.times.len())
            .map(|k| field.rot.angle_to(&self.orientations.rotation(k)))
            .collect()
    }
}

/// Single particle in a constant field `Λ`, started at `initial` with position 0.
///
/// The gradual model integrates the one-particle SDE with target `Λ`; the jump model
/// redraws the orientation as `Λ η` at rate 1. Randomness comes from `rng` in order.
pub fn run_single_in_field<R: Rng + ?Sized>(
    cfg: &SingleConfig,
    field: &Field,
    initial: &Rotation,
    rng: &mut R,
) -> Result<Trajectory> {
    match cfg.representation {
        Representation::Matrix => single_generic::<Rotation, R>(cfg, field, *initial, rng),
        Representation::Quaternion => {
            single_generic::<UnitQuaternion, R>(cfg, field, rot_to_quat(initial), rng)
        }
    }
}

fn single_generic<B: Body, R: Rng + ?Sized>(
    cfg: &SingleConfig,
    field: &Field,
    initial: B,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(cfg.d > 0.0) || !(cfg.t_end >= 0.0) {
        return Err(Error::InvalidParameter("D > 0 and t_end >= 0 required".into()));
    }
    let target = B::of_field(field);
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut states: Vec<B> = Vec::new();
    let mut x = Vector3::zeros();
    let mut a = initial;
    match cfg.model {
        Model::Gradual => {
            if !(cfg.dt > 0.0) || cfg.record_every == 0 {
                return Err(Error::InvalidParameter("dt > 0 and record_every >= 1 required".into()));
            }
            let steps = (cfg.t_end / cfg.dt).round() as u64;
            for k in 1..=steps {
                a = a.gradual_update(&target, cfg.d, cfg.dt, rng);
                x += cfg.dt * a.e1();
                let t = k as f64 * cfg.dt;
                if t >= cfg.burn_in && k % cfg.record_every == 0 {
                    times.push(t);
                    positions.push(x);
                    states.push(a);
                }
            }
        }
        Model::Jump => {
            let sampler = VonMises::new(cfg.d)?;
            let mut t = 0.0;
            loop {
                let wait = exponential(rng);
                if t + wait > cfg.t_end {
                    x += (cfg.t_end - t) * a.e1();
                    break;
                }
                x += wait * a.e1();
                t += wait;
                let (theta, axis) = sampler.sample_angle_axis(rng);
                a = B::jump_update(&target, theta, &axis);
                if t >= cfg.burn_in {
                    times.push(t);
                    positions.push(x);
                    states.push(a);
                }
            }
        }
    }
    Ok(Trajectory {
        times,
        positions,
        orientations: B::wrap_vec(states),
    })
}
