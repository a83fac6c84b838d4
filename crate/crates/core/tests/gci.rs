use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sohb_core::gci::{
    adjoint_jump_monte_carlo, constants, constants_for, constants_gauss_legendre,
    span_closure_residual, solve_h, verify_adjoint_jump, weight, GciProfile,
};
use sohb_core::micro::Model;
use sohb_core::{Error, Rotation};

/// Fourth-order central difference.
fn d1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[test]
fn profile_solves_the_divergence_form_by_finite_differences() {
    // (d/dr)[(1−r²)^{5/2} e^{2r²/D} h'] − (3 + 4r²/D)(1−r²)^{3/2} e^{2r²/D} h = r(1−r²)^{3/2} e^{2r²/D},
    // checked on a grid offset from every collocation set.
    for d in [0.2, 1.0, 5.0] {
        let p = solve_h(d).unwrap();
        let e = |r: f64| (2.0 * r * r / d).exp();
        let flux = |r: f64| (1.0 - r * r).powf(2.5) * e(r) * d1(|x| p.hbar(x), r, 1e-3);
        for k in 0..40 {
            let r = -0.9 + 1.8 * (k as f64 + 0.37) / 40.0;
            let w = (1.0 - r * r).powf(1.5) * e(r);
            let lhs = d1(flux, r, 1e-3) - (3.0 + 4.0 * r * r / d) * w * p.hbar(r);
            let rhs = r * w;
            assert!((lhs - rhs).abs() <= 1e-6, "D={d} r={r}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn refinement_ladder_converges_fast() {
    for d in [0.2, 1.0, 5.0] {
        let p = solve_h(d).unwrap();
        assert!(p.residual.unwrap() <= 1e-6);
        for w in p.ladder.windows(2) {
            if w[0].residual > 1e-6 {
                assert!(
                    w[1].residual <= w[0].residual / 4.0 || w[1].residual <= 1e-6,
                    "D={d}: {:?}",
                    p.ladder
                );
            }
        }
    }
}

#[test]
fn profile_parity_and_sign() {
    for d in [0.2, 1.0, 5.0] {
        let p = solve_h(d).unwrap();
        for k in 0..200 {
            let r = k as f64 / 200.0;
            assert!((p.hbar(r) + p.hbar(-r)).abs() <= 1e-8);
            assert!(p.hbar(r) <= 1e-10);
        }
        assert!(p.hbar(0.5) <= 0.0);
    }
}

#[test]
fn kbar_by_model() {
    let jump = GciProfile::jump(0.8).unwrap();
    let gradual = solve_h(0.8).unwrap();
    for k in 0..=40 {
        let s = -0.5 + 2.0 * k as f64 / 40.0;
        assert_eq!(jump.kbar(s).unwrap(), 1.0);
        if k > 0 && k < 40 {
            assert!(gradual.kbar(s).unwrap() < 0.0, "s={s}");
        }
    }
    let r = 0.5f64.sqrt();
    assert_eq!(gradual.kbar(0.5).unwrap(), gradual.hbar(r) / r);
    // k̄(½ + cos θ) = h̄(cos(θ/2)) / cos(θ/2)
    for theta in [0.3f64, 1.1, 2.5] {
        let c = (0.5 * theta).cos();
        let lhs = gradual.kbar(0.5 + f64::cos(theta)).unwrap();
        assert!((lhs - gradual.hbar(c) / c).abs() < 1e-12);
    }
    assert!(matches!(jump.kbar(1.6), Err(Error::DomainError { .. })));
    assert!(matches!(jump.kbar(-0.6), Err(Error::DomainError { .. })));
}

#[test]
fn weight_sign_by_model() {
    let jump = GciProfile::jump(0.5).unwrap();
    let gradual = solve_h(0.5).unwrap();
    for k in 1..100 {
        let theta = std::f64::consts::PI * k as f64 / 100.0;
        assert!(weight(&jump, theta) >= 0.0);
        assert!(weight(&gradual, theta) <= 0.0);
    }
}

#[test]
fn constants_share_c3_but_differ_between_models() {
    let j = constants(0.7, Model::Jump).unwrap();
    let g = constants(0.7, Model::Gradual).unwrap();
    assert_eq!(j.c3, 0.35);
    assert_eq!(g.c3, 0.35);
    assert_eq!(j.c1, g.c1);
    assert!(j.c1 > 0.0 && j.c1 < 1.0);
    assert!((j.c2 - g.c2).abs() > 1e-6);
    assert!((j.c2 - j.c2_prime - j.c4).abs() <= 1e-10);
}

#[test]
fn quadratures_agree_for_both_models() {
    for model in [Model::Jump, Model::Gradual] {
        let p = GciProfile::for_model(model, 1.0).unwrap();
        let a = constants_for(&p).unwrap();
        let b = constants_gauss_legendre(&p, 512).unwrap();
        for (x, y) in [(a.c1, b.c1), (a.c2, b.c2), (a.c2_prime, b.c2_prime), (a.c4, b.c4)] {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{model:?}: {x} vs {y}");
        }
    }
}

#[test]
fn monte_carlo_agrees_with_the_adjoint_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let l = Rotation::uniform(&mut rng);
    let p = Vector3::new(0.4, -0.9, 1.3);
    let (mean, se) = adjoint_jump_monte_carlo(&l, &p, 0.6, 1_000_000, &mut rng).unwrap();
    assert!(mean.abs() <= 4.0 * se, "{mean} ± {se}");
    assert!(verify_adjoint_jump(&l, &p, 0.6).unwrap() <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_residual_vanishes(seed in any::<u64>(), d in 0.1f64..5.0,
                                 px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0) {
        let l = Rotation::uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(verify_adjoint_jump(&l, &Vector3::new(px, py, pz), d).unwrap() <= 1e-8);
    }

    #[test]
    fn discretized_solutions_span_constants_and_linear_terms(seed in any::<u64>(), shift in -3.0f64..3.0) {
        let l = Rotation::uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        let p = Vector3::new(0.5, -1.0, 0.25);
        prop_assert!(span_closure_residual(&l, &p, 0.9, shift).unwrap() <= 1e-6);
    }
}
