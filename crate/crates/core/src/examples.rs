//! Two-qubit example families and the α-sweep driver.
//!
//! Both families mix two entangled pure states on orthogonal supports:
//!
//! ```text
//! ϱ(α) = α |a⟩⟨a| + (1 − α) |b⟩⟨b|,
//! |a⟩ = γ1|00⟩ + γ2|11⟩,   |b⟩ = γ3|01⟩ + γ4|10⟩
//! ```
//!
//! with all `γ = 1/√2` for [`example1`].

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixed::{solve, MixedProblem, SolverConfig};
use crate::states::{DensityMatrix, SpaceShape, C64};

const GAMMA_TOL: f64 = 1e-12;

/// `γ` for the symmetric case: both components share their amplitudes.
pub const CASE_I: [f64; 4] = [
    0.577_350_269_189_625_8, // 1/√3
    0.816_496_580_927_726,   // √(2/3)
    0.577_350_269_189_625_8,
    0.816_496_580_927_726,
];

/// `γ` for the asymmetric case (`γ3 = 1/√4 = 0.5`).
pub const CASE_II: [f64; 4] = [
    0.577_350_269_189_625_8,
    0.816_496_580_927_726,
    0.5,
    0.866_025_403_784_438_6, // √(3/4)
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1Params {
    pub alpha: f64,
}

impl Example1Params {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2Params {
    pub alpha: f64,
    pub gamma: [f64; 4],
}

impl Example2Params {
    pub fn new(alpha: f64, gamma: [f64; 4]) -> Result<Self> {
        check_alpha(alpha)?;
        check_gamma(&gamma)?;
        Ok(Self { alpha, gamma })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )))
    }
}

fn check_gamma(g: &[f64; 4]) -> Result<()> {
    for (pair, (a, b)) in [(g[0], g[1]), (g[2], g[3])].into_iter().enumerate() {
        let norm = a * a + b * b;
        if !((norm - 1.0).abs() <= GAMMA_TOL) {
            return Err(Error::InvalidParameter(format!(
                "gamma pair {} has squared norm {norm}, expected 1",
                pair + 1
            )));
        }
    }
    Ok(())
}

/// `α |Φ⁺⟩⟨Φ⁺| + (1 − α) |Ψ⁺⟩⟨Ψ⁺|`; `‖ϱ‖² = 1 + 2α² − 2α`.
pub fn example1(p: Example1Params) -> Result<DensityMatrix> {
    check_alpha(p.alpha)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(mixture(p.alpha, [h; 4]))
}

pub fn example2(p: Example2Params) -> Result<DensityMatrix> {
    check_alpha(p.alpha)?;
    check_gamma(&p.gamma)?;
    Ok(mixture(p.alpha, p.gamma))
}

fn mixture(alpha: f64, g: [f64; 4]) -> DensityMatrix {
    // basis order |00⟩, |01⟩, |10⟩, |11⟩; the two blocks do not overlap
    let mut m = DMatrix::<C64>::zeros(4, 4);
    let mut block = |idx: [usize; 2], amp: [f64; 2], w: f64| {
        for (r, ar) in idx.iter().zip(amp) {
            for (c, ac) in idx.iter().zip(amp) {
                m[(*r, *c)] = C64::new(w * ar * ac, 0.0);
            }
        }
    };
    block([0, 3], [g[0], g[1]], alpha);
    block([1, 2], [g[2], g[3]], 1.0 - alpha);
    let shape = SpaceShape::qubits(2).expect("two qubits");
    DensityMatrix::from_parts_unchecked(shape, m)
}

/// A named family for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Example1,
    Example2 { gamma: [f64; 4] },
}

impl Family {
    pub fn state(&self, alpha: f64) -> Result<DensityMatrix> {
        match *self {
            Family::Example1 => example1(Example1Params { alpha }),
            Family::Example2 { gamma } => example2(Example2Params { alpha, gamma }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub chi: f64,
    pub measure_sq_half: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Set when this row could not be computed; the numeric fields are NaN.
    pub error: Option<Error>,
}

impl SweepRow {
    fn failed(alpha: f64, error: Error) -> Self {
        Self {
            alpha,
            chi: f64::NAN,
            measure_sq_half: f64::NAN,
            kkt_residual: f64::NAN,
            converged: false,
            error: Some(error),
        }
    }
}

/// Solves each `α` independently; rows follow the input order and a failing
/// row is recorded rather than aborting the sweep.
pub fn sweep(family: Family, alphas: &[f64], config: &SolverConfig) -> Vec<SweepRow> {
    alphas
        .par_iter()
        .map(|&alpha| {
            let run = || -> Result<SweepRow> {
                let rho = family.state(alpha)?;
                let problem = MixedProblem::from_config(rho, config)?;
                let r = solve(&problem, config)?;
                Ok(SweepRow {
                    alpha,
                    chi: r.chi,
                    measure_sq_half: r.measure_sq_half,
                    kkt_residual: r.kkt_residual,
                    converged: r.converged,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| SweepRow::failed(alpha, e))
        })
        .collect()
}

/// `0, 0.05, ..., 1`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}
