//! Starting points for the ensemble search.

use rand::Rng;

use super::model::{Layout, Vars};
use crate::error::{Error, Result};
use crate::random;
use crate::states::{ensemble_norm_squared, DensityMatrix, ProductState, SeparableEnsemble, C64};

/// Eigenvalues at or below this count as zero.
const RANK_TOL: f64 = 1e-12;

/// A feasible ensemble built from the spectrum of `rho`.
///
/// The weights are the nonzero eigenvalues of `rho`, placed on distinct
/// computational basis product states (which are pairwise orthogonal), so
/// `Σ p_k = 1` and the ensemble's Frobenius norm equals that of `rho`. The
/// largest eigenvalue goes to the basis state with the largest diagonal entry
/// and so on down. Remaining slots carry weight zero.
pub fn feasible_start(rho: &DensityMatrix, num_terms: usize) -> Result<SeparableEnsemble> {
    let shape = rho.shape().clone();
    let (values, _) = rho.eigen();
    let mut alphas: Vec<f64> = values.into_iter().filter(|&v| v > RANK_TOL).collect();
    alphas.sort_by(|a, b| b.total_cmp(a));
    if alphas.len() > num_terms {
        return Err(Error::TooFewTerms {
            needed: alphas.len(),
            got: num_terms,
        });
    }
    let total: f64 = alphas.iter().sum();
    alphas.iter_mut().for_each(|a| *a /= total);

    let n = rho.dim();
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|k| rho.entries()[(k, k)].re).collect();
    order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]).then(a.cmp(&b)));

    let mut weights = Vec::with_capacity(num_terms);
    let mut states = Vec::with_capacity(num_terms);
    for k in 0..num_terms {
        weights.push(alphas.get(k).copied().unwrap_or(0.0));
        let idx = order[k % n];
        states.push(ProductState::basis(shape.clone(), &shape.multi_index(idx))?);
    }
    SeparableEnsemble::new(shape, weights, states)
}

/// A randomized feasible start.
///
/// The orthogonal product states of `base` (a [`feasible_start`]) are rotated by
/// random local unitaries, which keeps them orthogonal and the start feasible.
/// Slots past the support of `base` get random product states carrying a
/// Dirichlet(1, ..., 1) share `t` of the weight, with `t` the largest value in
/// `(0, 1]` that keeps the norm constraint satisfied; when no such `t` exists
/// those slots keep weight zero.
pub(crate) fn random_start<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &Layout,
    base: &SeparableEnsemble,
    norm_sq_target: f64,
) -> Vars {
    let shape = &layout.shape;
    let us = random::local_unitaries(rng, shape);
    let support = base.weights().iter().filter(|&&p| p > 0.0).count();

    let mut states: Vec<ProductState> = Vec::with_capacity(layout.terms);
    for s in &base.states()[..support] {
        let factors = s
            .factors()
            .iter()
            .zip(&us)
            .map(|(f, u)| {
                (0..f.len())
                    .map(|r| (0..f.len()).map(|c| u[(r, c)] * f[c]).sum::<C64>())
                    .collect()
            })
            .collect();
        states.push(ProductState::from_parts_unchecked(shape.clone(), factors));
    }
    let extra = layout.terms - support;
    let q = if extra > 0 {
        random::simplex_weights(rng, extra)
    } else {
        Vec::new()
    };
    for _ in 0..extra {
        states.push(random::product_state(rng, shape));
    }

    let alpha = &base.weights()[..support];
    let t = if extra > 0 {
        mixing_share(&states, alpha, &q, support, norm_sq_target)
    } else {
        0.0
    };
    let mut weights: Vec<f64> = alpha.iter().map(|a| a * (1.0 - t)).collect();
    weights.extend(q.iter().map(|w| w * t));
    let ensemble = SeparableEnsemble::from_parts_unchecked(shape.clone(), weights, states);
    Vars::from_ensemble(layout, &ensemble)
}

/// Largest `t ∈ (0, 1]` with `g((1−t)·α ⊕ t·q) = target`, or 0.
///
/// `g` is quadratic in `t`: `(1−t)²A + 2t(1−t)B + t²C` with `A = target`
/// (the `α` block is feasible on its own), `B` the cross term and `C` the
/// norm of the random block, so the nonzero root is `2(A−B)/(A−2B+C)`.
fn mixing_share(
    states: &[ProductState],
    alpha: &[f64],
    q: &[f64],
    support: usize,
    target: f64,
) -> f64 {
    let shape = states[0].shape().clone();
    let rand_part =
        SeparableEnsemble::from_parts_unchecked(shape, q.to_vec(), states[support..].to_vec());
    let c = ensemble_norm_squared(&rand_part);
    let mut b = 0.0;
    for (r, ar) in alpha.iter().enumerate() {
        for (s, qs) in q.iter().enumerate() {
            let ov: f64 = states[r]
                .factors()
                .iter()
                .zip(states[support + s].factors())
                .map(|(x, y)| crate::states::inner(x, y).norm_sqr())
                .product();
            b += ar * qs * ov;
        }
    }
    let denom = target - 2.0 * b + c;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    let t = 2.0 * (target - b) / denom;
    if t > 0.0 && t <= 1.0 {
        t
    } else {
        0.0
    }
}
