//! Mixed-state geometric measure.
//!
//! For a density matrix `ϱ` the measure is the Frobenius distance to the
//! closest disentangled state `ρ` of the same Frobenius norm. With
//! `‖ρ‖ = ‖ϱ‖`, `½‖ϱ − ρ‖² = ‖ϱ‖² − tr(ϱρ)`, so the search maximizes
//!
//! ```text
//! Σ_k p_k ⟨Φ_k|ϱ|Φ_k⟩
//! s.t. ‖φ_i^(k)‖ = 1,  Σ_{r,s} p_r p_s |⟨Φ_r|Φ_s⟩|² = ‖ϱ‖²,  Σ p_k = 1,  p ≥ 0
//! ```
//!
//! over ensembles of `N = n² + 1` product states. The optimum `χ(ϱ)` gives
//! `½E(ϱ)² = ‖ϱ‖² − χ(ϱ)`, and at a first-order point `χ = λ‖ϱ‖² + κ` for the
//! recovered multipliers.
//!
//! The search is restricted to `‖ρ‖ = ‖ϱ‖` exactly; states of other norms are
//! never considered.

mod init;
mod kkt;
mod lm;
mod model;
mod optimizer;
mod simplex;

use rayon::prelude::*;

pub use init::feasible_start;
pub use kkt::{
    kkt_report, kkt_report_raw, kkt_residual, mu_by_subsystem, recover_multipliers,
    recover_multipliers_with, KktMultipliers, KktReport, MultiplierFit, DEFAULT_ACT_TOL,
    REALNESS_TOL,
};
pub use model::Gradients;

use crate::error::{Error, Result};
use crate::random;
use crate::states::{frobenius_norm_squared, DensityMatrix, RawEnsemble, SeparableEnsemble};
use model::{evaluate, Layout, Target, Vars};

/// Weights below this are reported as exactly zero.
pub const ZERO_WEIGHT_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;
/// Starts after the first run in batches of this size.
const START_BATCH: usize = 4;

/// Settings for [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub starts: usize,
    /// Number of ensemble terms; `None` means `n² + 1`.
    pub num_terms: Option<usize>,
    pub seed: u64,
    /// Tolerance on the norm constraint.
    pub feas_tol: f64,
    /// Tolerance on the optimality residual.
    pub stat_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub act_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            starts: 30,
            num_terms: None,
            seed: 0,
            feas_tol: 1e-8,
            stat_tol: 1e-7,
            max_outer: 100,
            max_inner: 2000,
            initial_penalty: 1.0,
            penalty_growth: 10.0,
            act_tol: DEFAULT_ACT_TOL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.starts == 0 {
            return bad("starts must be at least 1");
        }
        if self.num_terms == Some(0) {
            return bad("num_terms must be at least 1");
        }
        for (name, v) in [
            ("feas_tol", self.feas_tol),
            ("stat_tol", self.stat_tol),
            ("initial_penalty", self.initial_penalty),
            ("act_tol", self.act_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return bad("penalty_growth must exceed 1");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }
}

/// A target state together with the ensemble size used to approximate it.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProblem {
    rho: DensityMatrix,
    num_terms: usize,
    norm_sq_target: f64,
}

impl MixedProblem {
    pub fn new(rho: DensityMatrix, num_terms: Option<usize>) -> Result<Self> {
        let bound = rho.shape().caratheodory_bound();
        let num_terms = num_terms.unwrap_or(bound);
        if num_terms == 0 || num_terms > bound {
            return Err(Error::InvalidConfig(format!(
                "num_terms must lie in 1..={bound}, got {num_terms}"
            )));
        }
        let norm_sq_target = frobenius_norm_squared(&rho);
        Ok(Self {
            rho,
            num_terms,
            norm_sq_target,
        })
    }

    pub fn from_config(rho: DensityMatrix, config: &SolverConfig) -> Result<Self> {
        Self::new(rho, config.num_terms)
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    /// `‖ϱ‖²`.
    pub fn norm_sq_target(&self) -> f64 {
        self.norm_sq_target
    }
}

/// Diagnostics for one start.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub start: usize,
    pub chi: f64,
    pub feas_gap: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureResult {
    /// Entanglement eigenvalue `χ(ϱ)`: the objective at `ensemble`.
    pub chi: f64,
    /// `½E(ϱ)² = ‖ϱ‖² − χ`.
    pub measure_sq_half: f64,
    pub norm_sq_target: f64,
    /// The nearest disentangled state found.
    pub ensemble: SeparableEnsemble,
    pub multipliers: KktMultipliers,
    pub kkt_residual: f64,
    pub starts_used: usize,
    pub best_start: usize,
    pub converged: bool,
    pub runs: Vec<RunSummary>,
}

impl MeasureResult {
    /// `E(ϱ)`.
    pub fn measure(&self) -> f64 {
        (2.0 * self.measure_sq_half.max(0.0)).sqrt()
    }

    /// `λ‖ϱ‖² + κ` from the recovered multipliers.
    pub fn multiplier_eigenvalue(&self) -> f64 {
        self.multipliers.eigenvalue(self.norm_sq_target)
    }
}

/// Norm, simplex and factor-normalization gaps; all zero at feasibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    /// `Σ_{r,s} p_r p_s |⟨Φ_r|Φ_s⟩|² − ‖ϱ‖²`.
    pub norm_gap: f64,
    /// `Σ p_k − 1`.
    pub simplex_gap: f64,
    /// `‖φ_i^(k)‖² − 1`, term-major.
    pub unit_gaps: Vec<f64>,
    /// Most negative weight, or 0.
    pub negative_weight: f64,
}

impl ConstraintResiduals {
    pub fn max_abs(&self) -> f64 {
        self.unit_gaps
            .iter()
            .fold(self.norm_gap.abs().max(self.simplex_gap.abs()), |a, g| {
                a.max(g.abs())
            })
            .max(self.negative_weight.abs())
    }
}

pub(crate) fn frobenius_target(rho: &DensityMatrix) -> f64 {
    frobenius_norm_squared(rho)
}

/// `Σ p_k ⟨Φ_k|ϱ|Φ_k⟩`.
pub fn objective(rho: &DensityMatrix, e: &SeparableEnsemble) -> Result<f64> {
    rho.shape().ensure_same(e.shape())?;
    e.weights()
        .iter()
        .zip(e.states())
        .map(|(p, s)| Ok(p * crate::states::expectation(rho, s)?))
        .sum()
}

pub fn constraint_residuals(
    rho: &DensityMatrix,
    e: &SeparableEnsemble,
) -> Result<ConstraintResiduals> {
    constraint_residuals_raw(rho, &RawEnsemble::from(e))
}

pub fn constraint_residuals_raw(
    rho: &DensityMatrix,
    e: &RawEnsemble,
) -> Result<ConstraintResiduals> {
    rho.shape().ensure_same(&e.shape)?;
    e.check_lengths()?;
    let layout = Layout::new(&e.shape, e.len());
    let x = Vars::from_raw(&layout, e);
    let ev = evaluate(&Target::new(rho), &layout, &x);
    let unit_gaps = e
        .factors
        .iter()
        .flat_map(|term| {
            term.iter()
                .map(|f| f.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0)
        })
        .collect();
    Ok(ConstraintResiduals {
        norm_gap: ev.g - frobenius_norm_squared(rho),
        simplex_gap: e.weights.iter().sum::<f64>() - 1.0,
        unit_gaps,
        negative_weight: e.weights.iter().copied().fold(0.0, f64::min),
    })
}

/// Objective and norm-constraint values with their analytic gradients at an
/// arbitrary (not necessarily normalized) ensemble.
pub fn gradients(rho: &DensityMatrix, e: &RawEnsemble) -> Result<Gradients> {
    rho.shape().ensure_same(&e.shape)?;
    e.check_lengths()?;
    let layout = Layout::new(&e.shape, e.len());
    let x = Vars::from_raw(&layout, e);
    Ok(model::gradients_at(&Target::new(rho), &layout, &x))
}

struct RunRecord {
    summary: RunSummary,
    ensemble: SeparableEnsemble,
    multipliers: Option<KktMultipliers>,
    feasible: bool,
}

/// Multi-start maximization of the ensemble objective.
///
/// Start 0 is [`feasible_start`]; the others are randomized feasible starts
/// drawn from independent streams of `config.seed`. Among runs that satisfy the
/// norm constraint within `feas_tol`, the largest `χ` wins, then the smaller
/// optimality residual, then the earlier start. `converged` is false when no
/// feasible run met both tolerances.
///
/// Since `χ ≤ ‖ϱ‖²`, a converged run attaining that bound (within `1e-12`)
/// ends the search after its batch of starts; `starts_used` reports how many
/// starts ran.
pub fn solve(problem: &MixedProblem, config: &SolverConfig) -> Result<MeasureResult> {
    config.validate()?;
    let rho = problem.rho();
    let norm_sq = problem.norm_sq_target();
    let n_terms = problem.num_terms();
    let base = feasible_start(rho, n_terms)?;
    let base_chi = objective(rho, &base)?;

    let layout = Layout::new(rho.shape(), n_terms);
    let target = Target::new(rho);
    let ctx = optimizer::Context {
        target: &target,
        layout: &layout,
        norm_sq,
    };

    // tr(ϱρ) ≤ ‖ϱ‖‖ρ‖ = ‖ϱ‖², so a start reaching it is already optimal
    if base_chi >= norm_sq - TIE_TOL {
        let record = finish_run(
            &ctx,
            0,
            Vars::from_ensemble(&layout, &base),
            None,
            config,
            rho,
        )?;
        return Ok(assemble(vec![record], norm_sq, 1));
    }

    let run_start = |s: usize| {
        let x0 = if s == 0 {
            Vars::from_ensemble(&layout, &base)
        } else {
            init::random_start(
                &mut random::start_rng(config.seed, s),
                &layout,
                &base,
                norm_sq,
            )
        };
        let y0 = initial_multiplier(&ctx, &x0, config);
        let outcome = optimizer::run(&ctx, x0, y0, config);
        let vars = outcome.vars.clone();
        finish_run(&ctx, s, vars, Some(outcome), config, rho)
    };
    // Once a converged run attains the bound no other start can do better.
    // Starts go in fixed-size batches so the stopping point, and with it the
    // result, does not depend on the thread count.
    let at_bound =
        |r: &RunRecord| r.feasible && r.summary.converged && r.summary.chi >= norm_sq - TIE_TOL;
    let mut records = vec![run_start(0)?];
    let mut next = 1;
    while next < config.starts && !records.iter().any(at_bound) {
        let end = (next + START_BATCH).min(config.starts);
        let batch: Vec<Result<RunRecord>> = (next..end).into_par_iter().map(run_start).collect();
        for r in batch {
            records.push(r?);
        }
        next = end;
    }
    let starts_used = records.len();

    // never report worse than the trivial feasible point
    let best_chi = records
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.summary.chi)
        .fold(f64::NEG_INFINITY, f64::max);
    if best_chi < base_chi - TIE_TOL {
        let fallback = finish_run(
            &ctx,
            0,
            Vars::from_ensemble(&layout, &base),
            None,
            config,
            rho,
        )?;
        records[0] = fallback;
    }
    Ok(assemble(records, norm_sq, starts_used))
}

fn initial_multiplier(ctx: &optimizer::Context, x: &Vars, config: &SolverConfig) -> f64 {
    let ev = evaluate(ctx.target, ctx.layout, x);
    kkt::multipliers_from(
        ctx.layout,
        x,
        &ev,
        MultiplierFit::FullSystem,
        config.act_tol,
    )
    .map(|m| 0.5 * m.lambda)
    .unwrap_or(0.0)
}

fn finish_run(
    ctx: &optimizer::Context,
    start: usize,
    mut x: Vars,
    outcome: Option<optimizer::RunOutcome>,
    config: &SolverConfig,
    rho: &DensityMatrix,
) -> Result<RunRecord> {
    let layout = ctx.layout;
    x.normalize_factors(layout);
    for p in x.p.iter_mut() {
        if *p < ZERO_WEIGHT_TOL {
            *p = 0.0;
        }
    }
    let sum: f64 = x.p.iter().sum();
    x.p.iter_mut().for_each(|p| *p /= sum);

    let ev = evaluate(ctx.target, layout, &x);
    let multipliers =
        kkt::multipliers_from(layout, &x, &ev, MultiplierFit::FullSystem, config.act_tol).ok();
    let kkt_residual = multipliers
        .as_ref()
        .map(|m| kkt::report_from(layout, &x, &ev, m, ctx.norm_sq).max())
        .unwrap_or(f64::INFINITY);
    let feas_gap = (ev.g - ctx.norm_sq).abs();
    let feasible = feas_gap <= config.feas_tol;
    let (outer_iterations, inner_iterations) = match &outcome {
        Some(o) => (o.outer_iterations, o.inner_iterations),
        None => (0, 0),
    };
    let ensemble = x.to_raw(layout).normalized()?;
    let chi = objective(rho, &ensemble)?;
    Ok(RunRecord {
        summary: RunSummary {
            start,
            chi,
            feas_gap,
            kkt_residual,
            outer_iterations,
            inner_iterations,
            converged: feasible && kkt_residual <= config.stat_tol,
        },
        ensemble,
        multipliers,
        feasible,
    })
}

fn assemble(records: Vec<RunRecord>, norm_sq: f64, starts_used: usize) -> MeasureResult {
    let any_feasible = records.iter().any(|r| r.feasible);
    let mut best: Option<&RunRecord> = None;
    for r in &records {
        if any_feasible && !r.feasible {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let (c, bc) = (r.summary.chi, b.summary.chi);
                c > bc + TIE_TOL
                    || ((c - bc).abs() <= TIE_TOL
                        && r.summary.kkt_residual < b.summary.kkt_residual)
            }
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.expect("at least one run");
    let multipliers = best.multipliers.clone().unwrap_or_else(|| KktMultipliers {
        lambda: f64::NAN,
        kappa: f64::NAN,
        mu: vec![f64::NAN; best.ensemble.len()],
        tau: vec![f64::NAN; best.ensemble.len()],
    });
    MeasureResult {
        chi: best.summary.chi,
        measure_sq_half: norm_sq - best.summary.chi,
        norm_sq_target: norm_sq,
        ensemble: best.ensemble.clone(),
        multipliers,
        kkt_residual: best.summary.kkt_residual,
        starts_used,
        best_start: best.summary.start,
        converged: best.feasible && best.summary.converged,
        runs: records.iter().map(|r| r.summary.clone()).collect(),
    }
}

/// `λ‖ϱ‖² + κ` at the best solution found by [`solve`].
pub fn entanglement_eigenvalue_mixed(problem: &MixedProblem, config: &SolverConfig) -> Result<f64> {
    Ok(solve(problem, config)?.multiplier_eigenvalue())
}
