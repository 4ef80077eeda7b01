//! Pure-state geometric measure.
//!
//! For a pure state `|Ψ⟩` the nearest product state maximizes the overlap
//! `|⟨Ψ|Φ⟩|`. Its stationary points solve the quantum eigenvalue system
//!
//! ```text
//! (⊗_{j≠k} ⟨φ_j|) |Ψ⟩ = λ |φ_k⟩,   ‖φ_k‖ = 1,   k = 1..m
//! ```
//!
//! whose largest eigenvalue `Λ_max` is the maximal overlap; the measure is
//! `1 − Λ_max`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::random;
use crate::states::{contract_except, inner, vec_norm, ProductState, PureState, C64};

pub const DEFAULT_STARTS: usize = 20;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Starts whose eigenvalues differ by no more than this are tied.
const TIE_TOL: f64 = 1e-12;

/// A solution `(λ, φ)` of the quantum eigenvalue system.
#[derive(Debug, Clone, PartialEq)]
pub struct PureEigenpair {
    pub lambda: f64,
    pub state: ProductState,
    /// `max_k ‖(⊗_{j≠k}⟨φ_j|)|Ψ⟩ − ⟨Φ|Ψ⟩ φ_k‖`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PureOptions {
    fn default() -> Self {
        Self {
            starts: DEFAULT_STARTS,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// Summary of one start of a multi-start run.
#[derive(Debug, Clone, PartialEq)]
pub struct PureRun {
    pub start: usize,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureSolution {
    pub best: PureEigenpair,
    pub best_start: usize,
    pub runs: Vec<PureRun>,
    /// False only when every start failed to converge.
    pub converged: bool,
}

impl PureSolution {
    /// The entanglement eigenvalue `Λ_max`.
    pub fn lambda_max(&self) -> f64 {
        self.best.lambda
    }

    /// `1 − Λ_max`.
    pub fn measure(&self) -> f64 {
        (1.0 - self.best.lambda).clamp(0.0, 1.0)
    }
}

/// `⟨Ψ|Φ⟩` for `|Φ⟩ = ⊗ φ_i`.
pub fn overlap_with_product(psi: &PureState, phi: &ProductState) -> Result<C64> {
    psi.shape().ensure_same(phi.shape())?;
    Ok(inner(psi.amplitudes(), &phi.to_vector()))
}

/// Residual of the eigenvalue system at `state`, using `⟨Φ|Ψ⟩` as the eigenvalue
/// so the value does not depend on the phases of the factors.
pub fn eigen_residual(psi: &PureState, state: &ProductState) -> Result<f64> {
    psi.shape().ensure_same(state.shape())?;
    let factors: Vec<&[C64]> = state.factors().iter().map(Vec::as_slice).collect();
    Ok(residual_of(psi, &factors))
}

fn residual_of(psi: &PureState, factors: &[&[C64]]) -> f64 {
    let w = psi.amplitudes();
    let mut worst = 0.0f64;
    for k in 0..factors.len() {
        let c = contract_except(psi.shape(), w, factors, k);
        // ⟨φ_k|c_k⟩ = ⟨Φ|Ψ⟩ for every k
        let eig = inner(factors[k], &c);
        let r = c
            .iter()
            .zip(factors[k])
            .map(|(ci, fi)| (ci - eig * fi).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    worst
}

/// Cyclic block iteration on the eigenvalue system from `start`.
///
/// Each block update replaces `φ_k` by the normalized contraction
/// `(⊗_{j≠k}⟨φ_j|)|Ψ⟩`, which maximizes the overlap in that factor and leaves
/// `⟨Ψ|Φ⟩` real and nonnegative. The overlap never decreases.
pub fn qe_iterate(
    psi: &PureState,
    start: &ProductState,
    max_iters: usize,
    tol: f64,
) -> Result<PureEigenpair> {
    psi.shape().ensure_same(start.shape())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let shape = psi.shape().clone();
    let m = shape.parties();
    let mut factors: Vec<Vec<C64>> = start.factors().to_vec();

    let views = |f: &[Vec<C64>]| -> f64 {
        let v: Vec<&[C64]> = f.iter().map(Vec::as_slice).collect();
        residual_of(psi, &v)
    };

    let mut residual = views(&factors);
    let mut iterations = 0;
    while residual > tol && iterations < max_iters {
        iterations += 1;
        for k in 0..m {
            let c = {
                let v: Vec<&[C64]> = factors.iter().map(Vec::as_slice).collect();
                contract_except(&shape, psi.amplitudes(), &v, k)
            };
            let norm = vec_norm(&c);
            // a zero contraction leaves the previous factor in place
            if norm > 1e-300 {
                factors[k] = c.into_iter().map(|z| z / norm).collect();
            }
        }
        residual = views(&factors);
    }

    let state = ProductState::from_parts_unchecked(shape, factors);
    let lambda = overlap_with_product(psi, &state)?.norm();
    Ok(PureEigenpair {
        lambda,
        state,
        residual,
        iterations,
        converged: residual <= tol,
    })
}

/// `Λ_max` by multi-start [`qe_iterate`] with default iteration limits.
pub fn entanglement_eigenvalue_pure(
    psi: &PureState,
    starts: usize,
    seed: u64,
) -> Result<PureSolution> {
    entanglement_eigenvalue_pure_with(
        psi,
        &PureOptions {
            starts,
            seed,
            ..PureOptions::default()
        },
    )
}

/// Start 0 is the computational basis state with the largest amplitude, the
/// rest are uniform on the product of unit spheres. The reduction is
/// deterministic given the seed.
pub fn entanglement_eigenvalue_pure_with(
    psi: &PureState,
    opts: &PureOptions,
) -> Result<PureSolution> {
    if opts.starts == 0 {
        return Err(Error::InvalidParameter(
            "at least one start is required".into(),
        ));
    }
    let shape = psi.shape();
    let runs: Vec<Result<PureEigenpair>> = (0..opts.starts)
        .into_par_iter()
        .map(|s| {
            let start = if s == 0 {
                let (idx, _) =
                    psi.amplitudes()
                        .iter()
                        .enumerate()
                        .fold((0, -1.0), |best, (k, a)| {
                            if a.norm() > best.1 {
                                (k, a.norm())
                            } else {
                                best
                            }
                        });
                ProductState::basis(shape.clone(), &shape.multi_index(idx))?
            } else {
                random::product_state(&mut random::start_rng(opts.seed, s), shape)
            };
            qe_iterate(psi, &start, opts.max_iters, opts.tol)
        })
        .collect();

    let mut best: Option<(usize, PureEigenpair)> = None;
    let mut summaries = Vec::with_capacity(runs.len());
    for (s, run) in runs.into_iter().enumerate() {
        let pair = run?;
        summaries.push(PureRun {
            start: s,
            lambda: pair.lambda,
            residual: pair.residual,
            iterations: pair.iterations,
            converged: pair.converged,
        });
        let better = match &best {
            None => true,
            Some((_, b)) => pair.lambda > b.lambda + TIE_TOL,
        };
        if better {
            best = Some((s, pair));
        }
    }
    let (best_start, best) = best.expect("at least one start");
    let converged = summaries.iter().any(|r| r.converged);
    Ok(PureSolution {
        best,
        best_start,
        runs: summaries,
        converged,
    })
}

/// `1 − Λ_max`, in `[0, 1]`.
pub fn geometric_measure_pure(psi: &PureState, starts: usize, seed: u64) -> Result<f64> {
    Ok(entanglement_eigenvalue_pure(psi, starts, seed)?.measure())
}
