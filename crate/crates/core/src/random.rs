//! Seeded sampling of states, ensembles and local unitaries.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::states::{
    vec_norm, DensityMatrix, ProductState, PureState, SeparableEnsemble, SpaceShape, C64,
};

/// Generator for start `index` of a multi-start run seeded with `seed`.
///
/// Each start gets its own ChaCha stream, so the draws of a start do not
/// depend on how many other starts exist or the order they run in.
pub fn start_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Standard complex Gaussian vector, normalized: uniform on the unit sphere of `C^d`.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<C64> {
    loop {
        let mut v: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = vec_norm(&v);
        if norm > 1e-300 {
            v.iter_mut().for_each(|z| *z /= norm);
            return v;
        }
    }
}

pub fn product_state<R: Rng + ?Sized>(rng: &mut R, shape: &SpaceShape) -> ProductState {
    let factors = shape.dims().iter().map(|&d| unit_vector(rng, d)).collect();
    ProductState::from_parts_unchecked(shape.clone(), factors)
}

pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, shape: &SpaceShape) -> PureState {
    PureState::normalized(shape.clone(), unit_vector(rng, shape.total_dim()))
        .expect("unit vector is normalized")
}

/// Flat Dirichlet(1, ..., 1) draw.
pub fn simplex_weights<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

pub fn ensemble<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &SpaceShape,
    terms: usize,
) -> SeparableEnsemble {
    let weights = simplex_weights(rng, terms);
    let states = (0..terms).map(|_| product_state(rng, shape)).collect();
    SeparableEnsemble::from_parts_unchecked(shape.clone(), weights, states)
}

/// A mixed state of the given rank: a random mixture of orthonormal vectors.
pub fn density_of_rank<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &SpaceShape,
    rank: usize,
) -> DensityMatrix {
    let n = shape.total_dim();
    let u = unitary(rng, n);
    let w = simplex_weights(rng, rank);
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (k, wk) in w.iter().enumerate() {
        let col = u.column(k);
        m += col * col.adjoint() * C64::new(*wk, 0.0);
    }
    let trace = m.trace().re;
    m /= C64::new(trace, 0.0);
    for r in 0..n {
        m[(r, r)].im = 0.0;
        for c in r + 1..n {
            m[(c, r)] = m[(r, c)].conj();
        }
    }
    DensityMatrix::new(shape.clone(), m).expect("random mixture is a density matrix")
}

/// Haar-distributed unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<C64> {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<C64> = (0..d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for q in &cols {
            let proj: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qa)| *x -= proj * qa);
        }
        let norm = vec_norm(&v);
        if norm > 1e-8 {
            v.iter_mut().for_each(|z| *z /= norm);
            cols.push(v);
        }
    }
    DMatrix::from_fn(d, d, |r, c| cols[c][r])
}

/// One random unitary per subsystem.
pub fn local_unitaries<R: Rng + ?Sized>(rng: &mut R, shape: &SpaceShape) -> Vec<DMatrix<C64>> {
    shape.dims().iter().map(|&d| unitary(rng, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::unitary_deviation;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = start_rng(7, 3).sample(StandardNormal);
        let b: f64 = start_rng(7, 3).sample(StandardNormal);
        let c: f64 = start_rng(7, 4).sample(StandardNormal);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn samples_satisfy_invariants() {
        let mut rng = start_rng(1, 0);
        let shape = SpaceShape::new(vec![2, 3]).unwrap();
        for _ in 0..50 {
            let u = unitary(&mut rng, 3);
            assert!(unitary_deviation(&u) < 1e-12);
            let w = simplex_weights(&mut rng, 5);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let d = density_of_rank(&mut rng, &shape, 2);
            assert_eq!(d.dim(), 6);
        }
    }
}
