//! Geometric measure of entanglement for pure and mixed multipartite states.
//!
//! For a pure state the measure follows from the largest overlap `Λ_max` with a
//! product state, computed in [`pure`]. For a density matrix it is the
//! Frobenius distance to the nearest disentangled state of equal norm,
//! computed in [`mixed`] by maximizing over ensembles of product states.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod examples;
pub mod mixed;
pub mod pure;
pub mod random;
pub mod states;

pub use error::{Error, Result};
pub use mixed::{
    entanglement_eigenvalue_mixed, solve, KktMultipliers, MeasureResult, MixedProblem,
    MultiplierFit, SolverConfig,
};
pub use pure::{entanglement_eigenvalue_pure, geometric_measure_pure, PureSolution};
pub use states::{
    DensityMatrix, ProductState, PureState, RawEnsemble, SeparableEnsemble, SpaceShape, C64,
};
