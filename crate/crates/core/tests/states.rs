mod common;

use common::*;
use geomeasure::examples::{example1, Example1Params};
use geomeasure::random;
use geomeasure::states::{
    apply_local_unitaries, ensemble_norm_squared, ensemble_to_density, expectation,
    frobenius_norm_squared, product_overlap, DensityMatrix, ProductState, SeparableEnsemble,
    SpaceShape,
};
use geomeasure::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn plus() -> Vec<geomeasure::C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![c(h, 0.0), c(h, 0.0)]
}

#[test]
fn shape_bookkeeping() {
    let s = shape(&[2, 3, 2]);
    assert_eq!(s.total_dim(), 12);
    assert_eq!(s.caratheodory_bound(), 145);
    assert!(SpaceShape::new(vec![2]).is_err());
    assert!(SpaceShape::new(vec![2, 0]).is_err());
}

#[test]
fn product_overlap_examples() {
    let s = qubits(2);
    let a = basis(&s, &[0, 0]);
    assert!((product_overlap(&a, &a).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    assert_eq!(
        product_overlap(&a, &basis(&s, &[1, 1])).unwrap().norm(),
        0.0
    );
    let b = ProductState::new(s.clone(), vec![plus(), plus()]).unwrap();
    assert!((product_overlap(&a, &b).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
}

#[test]
fn product_overlap_names_both_shapes() {
    let a = basis(&qubits(2), &[0, 0]);
    let b = basis(&shape(&[2, 3]), &[0, 0]);
    match product_overlap(&a, &b) {
        Err(Error::ShapeMismatch { left, right }) => {
            assert_eq!(left, vec![2, 2]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn ensemble_to_density_examples() {
    let s = qubits(2);
    let single = SeparableEnsemble::new(s.clone(), vec![1.0], vec![basis(&s, &[0, 0])]).unwrap();
    let d = ensemble_to_density(&single);
    for r in 0..4 {
        for col in 0..4 {
            let want = if r == 0 && col == 0 { 1.0 } else { 0.0 };
            assert!((d.entries()[(r, col)] - c(want, 0.0)).norm() < 1e-15);
        }
    }

    let all = [[0, 0], [0, 1], [1, 0], [1, 1]]
        .map(|dg| basis(&s, &dg))
        .to_vec();
    let mixed = SeparableEnsemble::new(s.clone(), vec![0.25; 4], all).unwrap();
    let d = ensemble_to_density(&mixed);
    let want = maximally_mixed(&s);
    assert!((d.entries() - want.entries()).norm() < 1e-15);
    assert!((ensemble_norm_squared(&mixed) - 0.25).abs() < 1e-15);

    let t = table1();
    let d = ensemble_to_density(&t);
    assert!((d.entries().trace() - c(1.0, 0.0)).norm() < 1e-12);
    assert!(DensityMatrix::new(s, d.entries().clone()).is_ok());
}

#[test]
fn ensemble_norm_squared_examples() {
    let s = shape(&[2, 3]);
    let single = SeparableEnsemble::new(s.clone(), vec![1.0], vec![basis(&s, &[1, 2])]).unwrap();
    assert!((ensemble_norm_squared(&single) - 1.0).abs() < 1e-15);

    // the reference ensemble is the optimum at α = 0.5, where ‖ϱ‖² = 0.5; the data carry four decimals
    let t = table1();
    let gram = ensemble_norm_squared(&t);
    let materialized = frobenius_norm_squared(&ensemble_to_density(&t));
    assert!((gram - materialized).abs() < 1e-12);
    assert!((gram - 0.5).abs() < 5e-3, "{gram}");
}

#[test]
fn frobenius_norm_examples() {
    assert!((frobenius_norm_squared(&bell().to_density()) - 1.0).abs() < 1e-15);
    assert!((frobenius_norm_squared(&maximally_mixed(&qubits(2))) - 0.25).abs() < 1e-15);
    for k in 0..=10 {
        let a = k as f64 / 10.0;
        let d = example1(Example1Params::new(a).unwrap()).unwrap();
        assert!((frobenius_norm_squared(&d) - (1.0 + 2.0 * a * a - 2.0 * a)).abs() < 1e-14);
    }
}

#[test]
fn expectation_examples() {
    let s = qubits(2);
    let zz = basis(&s, &[0, 0]);
    let proj = pure(&s, &[1.0, 0.0, 0.0, 0.0]).to_density();
    assert!((expectation(&proj, &zz).unwrap() - 1.0).abs() < 1e-15);
    assert!((expectation(&bell().to_density(), &zz).unwrap() - 0.5).abs() < 1e-15);
    let mut rng = random::start_rng(3, 0);
    let mm = maximally_mixed(&s);
    for _ in 0..10 {
        let phi = random::product_state(&mut rng, &s);
        assert!((expectation(&mm, &phi).unwrap() - 0.25).abs() < 1e-14);
    }
}

#[test]
fn local_unitary_examples() {
    let s = qubits(2);
    let proj = pure(&s, &[1.0, 0.0, 0.0, 0.0]).to_density();
    let id = DMatrix::<geomeasure::C64>::identity(2, 2);
    let same = apply_local_unitaries(&proj, &[id.clone(), id.clone()]).unwrap();
    assert!((same.entries() - proj.entries()).norm() < 1e-15);

    let z = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        c(1.0, 0.0),
        c(-1.0, 0.0),
    ]));
    let flipped = apply_local_unitaries(&proj, &[z, id.clone()]).unwrap();
    assert!((flipped.entries() - proj.entries()).norm() < 1e-15);

    let ex = example1(Example1Params::new(0.3).unwrap()).unwrap();
    let mut rng = random::start_rng(11, 0);
    for _ in 0..20 {
        let us = random::local_unitaries(&mut rng, &s);
        let out = apply_local_unitaries(&ex, &us).unwrap();
        assert!((frobenius_norm_squared(&out) - frobenius_norm_squared(&ex)).abs() < 1e-12);
    }
}

#[test]
fn non_unitary_input_reports_deviation() {
    let id = DMatrix::<geomeasure::C64>::identity(2, 2);
    let bad = id.clone() * c(2.0, 0.0);
    match apply_local_unitaries(&bell().to_density(), &[id, bad]) {
        Err(Error::NotUnitary {
            subsystem,
            deviation,
        }) => {
            assert_eq!(subsystem, 1);
            assert!(deviation > 1.0);
        }
        other => panic!("expected a unitarity error, got {other:?}"),
    }
}

#[test]
fn density_invariants_are_enforced() {
    let s = qubits(2);
    let mut m = maximally_mixed(&s).entries().clone();
    m[(0, 1)] = c(0.1, 0.0);
    assert!(matches!(
        DensityMatrix::new(s.clone(), m),
        Err(Error::NotHermitian(_))
    ));
    let mut m = DMatrix::<geomeasure::C64>::zeros(4, 4);
    m[(0, 0)] = c(1.5, 0.0);
    m[(1, 1)] = c(-0.5, 0.0);
    match DensityMatrix::new(s.clone(), m) {
        Err(Error::NotPositive(e)) => assert!((e + 0.5).abs() < 1e-12),
        other => panic!("expected a positivity error, got {other:?}"),
    }
    let m = DMatrix::<geomeasure::C64>::identity(4, 4);
    assert!(matches!(DensityMatrix::new(s, m), Err(Error::BadTrace(_))));
}

fn arb_shape() -> impl Strategy<Value = SpaceShape> {
    prop_oneof![
        Just(vec![2, 2]),
        Just(vec![2, 3]),
        Just(vec![3, 3]),
        Just(vec![2, 2, 2]),
    ]
    .prop_map(|d| SpaceShape::new(d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ensembles_materialize_to_valid_density_matrices(
        seed in any::<u64>(),
        s in arb_shape(),
        terms in 1usize..8,
    ) {
        let mut rng = random::start_rng(seed, 0);
        let e = random::ensemble(&mut rng, &s, terms);
        let d = ensemble_to_density(&e);
        // re-validating runs every invariant check
        prop_assert!(DensityMatrix::new(s.clone(), d.entries().clone()).is_ok());
        let gram = ensemble_norm_squared(&e);
        prop_assert!((gram - frobenius_norm_squared(&d)).abs() <= 1e-10);
        prop_assert!(gram > 0.0 && gram <= 1.0 + 1e-12);
    }

    #[test]
    fn overlap_is_conjugate_symmetric(seed in any::<u64>(), s in arb_shape()) {
        let mut rng = random::start_rng(seed, 0);
        let a = random::product_state(&mut rng, &s);
        let b = random::product_state(&mut rng, &s);
        let ab = product_overlap(&a, &b).unwrap();
        let ba = product_overlap(&b, &a).unwrap();
        prop_assert!((ab - ba.conj()).norm() < 1e-14);
        let prod = ab * ba;
        prop_assert!(prod.im.abs() < 1e-14 && prod.re >= 0.0);
    }

    #[test]
    fn expectation_ignores_factor_phases(
        seed in any::<u64>(),
        s in arb_shape(),
        theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let mut rng = random::start_rng(seed, 0);
        let d = random::density_of_rank(&mut rng, &s, 2);
        let phi = random::product_state(&mut rng, &s);
        let mut factors = phi.factors().to_vec();
        let phase = geomeasure::C64::from_polar(1.0, theta);
        factors[0].iter_mut().for_each(|z| *z *= phase);
        let rotated = ProductState::new(s.clone(), factors).unwrap();
        let e0 = expectation(&d, &phi).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&e0));
        prop_assert!((e0 - expectation(&d, &rotated).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn local_unitaries_preserve_the_norm(seed in any::<u64>(), s in arb_shape()) {
        let mut rng = random::start_rng(seed, 0);
        let d = random::density_of_rank(&mut rng, &s, 3);
        let us = random::local_unitaries(&mut rng, &s);
        let out = apply_local_unitaries(&d, &us).unwrap();
        prop_assert!((frobenius_norm_squared(&out) - frobenius_norm_squared(&d)).abs() <= 1e-12);
        prop_assert!((out.entries().trace() - c(1.0, 0.0)).norm() < 1e-12);
    }
}
