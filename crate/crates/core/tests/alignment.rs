use nalgebra::Vector3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sohb_core::alignment::{
    neighbors_brute_force, target_quaternion, target_rotation, AllPairs, CellGrid, Kernel,
    KernelShape, PeriodicBox,
};
use sohb_core::rotations::{quat_to_rot, Thresholds};
use sohb_core::sampling::VonMises;
use sohb_core::{Rotation, UnitQuaternion};

struct Cluster {
    pbox: PeriodicBox,
    positions: Vec<Vector3<f64>>,
    quats: Vec<UnitQuaternion>,
}

fn cluster(seed: u64, n: usize) -> Cluster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pbox = PeriodicBox::new([3.0, 3.5, 4.0]).unwrap();
    let positions = (0..n)
        .map(|_| Vector3::from_fn(|i, _| rng.random::<f64>() * pbox.lengths[i]))
        .collect();
    let vm = VonMises::new(0.5).unwrap();
    let center = UnitQuaternion::uniform(&mut rng);
    let quats = (0..n)
        .map(|_| {
            let q = vm.sample_quat(&center, &mut rng);
            // nematic: store arbitrary signs
            if rng.random::<bool>() { -q } else { q }
        })
        .collect();
    Cluster { pbox, positions, quats }
}

fn kernels() -> Vec<Kernel> {
    vec![
        Kernel::new(1.0, KernelShape::Indicator).unwrap(),
        Kernel::new(1.2, KernelShape::SmoothBump).unwrap(),
    ]
}

#[test]
fn targets_do_not_depend_on_labels() {
    let c = cluster(1, 120);
    let th = Thresholds::default();
    let mut order: Vec<usize> = (0..c.positions.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let pos: Vec<_> = order.iter().map(|&i| c.positions[i]).collect();
    let qs: Vec<_> = order.iter().map(|&i| c.quats[i]).collect();
    let rots: Vec<_> = c.quats.iter().map(quat_to_rot).collect();
    let rots_p: Vec<_> = qs.iter().map(quat_to_rot).collect();
    for kernel in kernels() {
        let grid = CellGrid::build(&c.positions, &c.pbox, kernel.radius()).unwrap();
        let grid_p = CellGrid::build(&pos, &c.pbox, kernel.radius()).unwrap();
        for (new, &old) in order.iter().enumerate() {
            let a = target_rotation(old, &c.positions, &rots, &grid, &kernel, &th);
            let b = target_rotation(new, &pos, &rots_p, &grid_p, &kernel, &th);
            match (a, b) {
                (Ok(a), Ok(b)) => assert!(a.angle_to(&b) < 1e-10),
                (a, b) => assert_eq!(a.is_err(), b.is_err()),
            }
            let a = target_quaternion(old, &c.positions, &c.quats, &grid, &kernel, &th);
            let b = target_quaternion(new, &pos, &qs, &grid_p, &kernel, &th);
            if let (Ok(a), Ok(b)) = (a, b) {
                assert!(quat_to_rot(&a).angle_to(&quat_to_rot(&b)) < 1e-8);
            }
        }
    }
}

#[test]
fn targets_rotate_with_the_population() {
    let c = cluster(3, 100);
    let th = Thresholds::default();
    let g = Rotation::uniform(&mut ChaCha8Rng::seed_from_u64(4));
    let gq = sohb_core::rotations::rot_to_quat(&g);
    let rots: Vec<_> = c.quats.iter().map(quat_to_rot).collect();
    let rots_g: Vec<_> = rots.iter().map(|a| g * *a).collect();
    let quats_g: Vec<_> = c.quats.iter().map(|q| gq * *q).collect();
    for kernel in kernels() {
        let grid = CellGrid::build(&c.positions, &c.pbox, kernel.radius()).unwrap();
        for n in 0..c.positions.len() {
            if let Ok(a) = target_rotation(n, &c.positions, &rots, &grid, &kernel, &th) {
                let b = target_rotation(n, &c.positions, &rots_g, &grid, &kernel, &th).unwrap();
                assert!((g * a).angle_to(&b) < 1e-10);
            }
            if let Ok(q) = target_quaternion(n, &c.positions, &c.quats, &grid, &kernel, &th) {
                let r = target_quaternion(n, &c.positions, &quats_g, &grid, &kernel, &th).unwrap();
                assert!(quat_to_rot(&(gq * q)).angle_to(&quat_to_rot(&r)) < 1e-8);
            }
        }
    }
}

#[test]
fn matrix_and_quaternion_targets_agree() {
    let c = cluster(5, 150);
    let th = Thresholds::default();
    let rots: Vec<_> = c.quats.iter().map(quat_to_rot).collect();
    let kernel = Kernel::indicator(1.0).unwrap();
    let grid = CellGrid::build(&c.positions, &c.pbox, 1.0).unwrap();
    let mut checked = 0;
    for n in 0..c.positions.len() {
        if let Ok(a) = target_rotation(n, &c.positions, &rots, &grid, &kernel, &th) {
            let q = target_quaternion(n, &c.positions, &c.quats, &grid, &kernel, &th).unwrap();
            assert!(quat_to_rot(&q).angle_to(&a) < 1e-8);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn far_particles_have_no_influence() {
    let c = cluster(6, 80);
    let th = Thresholds::default();
    let kernel = Kernel::indicator(1.0).unwrap();
    let mut rots: Vec<_> = c.quats.iter().map(quat_to_rot).collect();
    let grid = CellGrid::build(&c.positions, &c.pbox, 1.0).unwrap();
    let before = target_rotation(0, &c.positions, &rots, &grid, &kernel, &th);
    let near = neighbors_brute_force(&c.positions, &c.pbox, 1.0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (m, r) in rots.iter_mut().enumerate() {
        if !near.contains(&m) {
            *r = Rotation::uniform(&mut rng);
        }
    }
    let after = target_rotation(0, &c.positions, &rots, &grid, &kernel, &th);
    match (before, after) {
        (Ok(a), Ok(b)) => assert_eq!(a, b),
        (a, b) => assert_eq!(a.is_err(), b.is_err()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_queries_equal_brute_force(seed in any::<u64>(), n in 1usize..300, radius in 0.2f64..1.5) {
        let c = cluster(seed, n);
        let grid = CellGrid::build(&c.positions, &c.pbox, radius).unwrap();
        let pairs = AllPairs { pbox: c.pbox, radius };
        for i in (0..n).step_by(7) {
            let mut a = grid.neighbors(&c.positions, i);
            a.sort_unstable();
            let b = neighbors_brute_force(&c.positions, &c.pbox, radius, i);
            prop_assert_eq!(&a, &b);
            let mut via_pairs = Vec::new();
            use sohb_core::alignment::NeighborSource;
            pairs.visit(&c.positions, &c.positions[i], |m, _| via_pairs.push(m));
            prop_assert_eq!(&via_pairs, &b);
        }
    }

    #[test]
    fn sign_flips_do_not_change_quaternion_targets(seed in any::<u64>()) {
        let c = cluster(seed, 60);
        let th = Thresholds::default();
        let kernel = Kernel::indicator(1.0).unwrap();
        let grid = CellGrid::build(&c.positions, &c.pbox, 1.0).unwrap();
        let flipped: Vec<_> = c.quats.iter().map(|q| -*q).collect();
        for n in 0..c.positions.len() {
            let a = target_quaternion(n, &c.positions, &c.quats, &grid, &kernel, &th);
            let b = target_quaternion(n, &c.positions, &flipped, &grid, &kernel, &th);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
