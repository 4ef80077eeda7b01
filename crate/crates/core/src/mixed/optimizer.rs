//! Augmented-Lagrangian ascent for one start.
//!
//! The norm constraint `h = g − ‖ϱ‖² = 0` enters through
//! `L = f − y·h − (c/2)·h²`. Factor normalization and the weight simplex are
//! kept exactly: each inner step moves along the projected gradient and then
//! renormalizes the factors and projects the weights onto the simplex. Inner
//! steps use Barzilai-Borwein lengths with a nonmonotone backtracking search,
//! switching to damped Newton steps ([`super::lm`]) once those slow down.
//!
//! When a run closes in on `ϱ` itself (a mixture of product states, where the
//! optimum is `ρ = ϱ`) the multiplier iteration stalls in a flat valley; a
//! dedicated least-squares polish with term merging finishes those runs.

use std::collections::VecDeque;

use super::lm::{distance_sq, Model};
use super::model::{evaluate, Evaluation, Layout, Target, Vars};
use super::simplex::project_simplex;
use super::{SolverConfig, ZERO_WEIGHT_TOL};
use crate::states::{inner, C64};

const MAX_PENALTY: f64 = 1e12;
const ARMIJO: f64 = 1e-4;
const NONMONOTONE_WINDOW: usize = 8;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e8;
const VALUE_NOISE: f64 = 1e-14;
/// Gradient iterations per inner solve before switching to Levenberg-Marquardt.
const GRADIENT_BUDGET: usize = 200;
const APPROX_WOLFE: f64 = 0.8;
/// Runs within this squared distance of `ϱ` try [`polish_distance`]...
const POLISH_GAP: f64 = 1e-6;
/// ...and try again after closing in by this factor.
const POLISH_RETRY: f64 = 1e-2;
const POLISH_ITERS: usize = 1000;
const TRIAL_ITERS: usize = 20;
/// Merge candidates tried per round.
const MERGE_CANDIDATES: usize = 8;
const POLISH_FLOOR: f64 = 1e-30;
/// Fidelity gap below which two terms are the same state.
const CLONE_TOL: f64 = 1e-12;
/// Fidelity gap below which the outer loop merges terms.
const MERGE_TOL: f64 = 1e-4;
/// Polishing gives up once the damping grew this much without progress.
const MAX_DAMPING: f64 = 1e12;

pub(crate) struct Context<'a> {
    pub target: &'a Target,
    pub layout: &'a Layout,
    pub norm_sq: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct RunOutcome {
    pub vars: Vars,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

struct Point {
    x: Vars,
    ev: Evaluation,
    value: f64,
    gp: Vec<f64>,
    /// Tangential factor gradient of the augmented Lagrangian.
    gz: Vec<C64>,
    /// Factor search direction: `gz / p_k`, i.e. the gradient per unit weight.
    /// Defined for zero-weight terms too, so idle terms can drift towards
    /// states worth reviving.
    dz: Vec<C64>,
}

impl Context<'_> {
    fn point(&self, x: Vars, y: f64, c: f64) -> Point {
        let ev = evaluate(self.target, self.layout, &x);
        let h = ev.g - self.norm_sq;
        let value = ev.f - y * h - 0.5 * c * h * h;
        let shift = y + c * h;
        let gp =
            ev.e.iter()
                .zip(&ev.s)
                .map(|(e, s)| e - 2.0 * shift * s)
                .collect();
        let mut gz = vec![C64::new(0.0, 0.0); x.z.len()];
        let mut dz = vec![C64::new(0.0, 0.0); x.z.len()];
        for k in 0..self.layout.terms {
            let pk = x.p[k];
            for i in 0..self.layout.dims.len() {
                let r = self.layout.range(k, i);
                for a in r.clone() {
                    dz[a] = ev.c[a] * 2.0 - ev.v[a] * (4.0 * shift);
                }
                // drop the radial component, keeping the step on the sphere to first order
                let phi = &x.z[r.clone()];
                let radial = inner(phi, &dz[r.clone()]).re;
                for ((d, g), f) in dz[r.clone()].iter_mut().zip(&mut gz[r]).zip(phi) {
                    *d -= f * radial;
                    *g = *d * pk;
                }
            }
        }
        Point {
            x,
            ev,
            value,
            gp,
            gz,
            dz,
        }
    }

    fn stationarity(&self, pt: &Point) -> f64 {
        let moved: Vec<f64> = pt.x.p.iter().zip(&pt.gp).map(|(p, g)| p + g).collect();
        let proj = project_simplex(&moved);
        let p_part = proj
            .iter()
            .zip(&pt.x.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut z_part = 0.0f64;
        for k in 0..self.layout.terms {
            for i in 0..self.layout.dims.len() {
                let r = self.layout.range(k, i);
                let norm = pt.gz[r].iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
                z_part = z_part.max(0.5 * norm);
            }
        }
        p_part.max(z_part)
    }

    fn retract(&self, pt: &Point, step: f64) -> Vars {
        let moved: Vec<f64> =
            pt.x.p
                .iter()
                .zip(&pt.gp)
                .map(|(p, g)| p + step * g)
                .collect();
        let p = project_simplex(&moved);
        let z =
            pt.x.z
                .iter()
                .zip(&pt.dz)
                .map(|(a, d)| a + d * step)
                .collect();
        let mut x = Vars { p, z };
        x.normalize_factors(self.layout);
        x
    }
}

fn dot(gp: &[f64], gz: &[C64], dp: &[f64], dz: &[C64]) -> f64 {
    let a: f64 = gp.iter().zip(dp).map(|(x, y)| x * y).sum();
    let b: f64 = gz.iter().zip(dz).map(|(x, y)| (x.conj() * y).re).sum();
    a + b
}

/// Terms whose product states have fidelity above `1 − MERGE_TOL` are merged
/// into the heavier one, freeing the other slot. Clusters of near-identical
/// terms are otherwise a flat, slowly converging direction of the problem.
fn merge_duplicates(layout: &Layout, x: &mut Vars) -> usize {
    merge_within(layout, x, MERGE_TOL)
}

fn merge_within(layout: &Layout, x: &mut Vars, tol: f64) -> usize {
    let m = layout.dims.len();
    let mut merged = 0;
    for k in 0..layout.terms {
        if x.p[k] == 0.0 {
            continue;
        }
        for t in k + 1..layout.terms {
            if x.p[t] == 0.0 {
                continue;
            }
            let fidelity: f64 = (0..m)
                .map(|i| inner(x.factor(layout, k, i), x.factor(layout, t, i)).norm_sqr())
                .product();
            if fidelity < 1.0 - tol {
                continue;
            }
            let (keep, drop) = if x.p[k] >= x.p[t] { (k, t) } else { (t, k) };
            x.p[keep] += x.p[drop];
            x.p[drop] = 0.0;
            merged += 1;
            if drop == k {
                break;
            }
        }
    }
    merged
}

fn weighted_sq(layout: &Layout, p: &[f64], dz: &[C64]) -> f64 {
    let width = layout.width;
    dz.chunks(width)
        .zip(p)
        .map(|(d, pk)| pk * d.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum()
}

struct InnerOutcome {
    pt: Point,
    iters: usize,
    stat: f64,
    /// The line search could not make progress.
    stalled: bool,
}

/// Maximizes the augmented Lagrangian for fixed `(y, c)` starting from `pt`.
fn inner_solve(
    ctx: &Context,
    mut pt: Point,
    y: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> InnerOutcome {
    let mut stalled = false;
    let mut stat = ctx.stationarity(&pt);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(NONMONOTONE_WINDOW);
    history.push_back(pt.value);
    let gnorm = pt
        .gp
        .iter()
        .map(|g| g * g)
        .chain(pt.dz.iter().map(|g| g.norm_sqr()))
        .sum::<f64>()
        .sqrt();
    let mut step = if gnorm > 0.0 {
        (1.0 / gnorm).min(1.0)
    } else {
        1.0
    };
    let mut iters = 0;
    while stat > tol && iters < max_iter {
        iters += 1;
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut trial_step = step;
        let accepted = loop {
            let xn = ctx.retract(&pt, trial_step);
            let dp: Vec<f64> = xn.p.iter().zip(&pt.x.p).map(|(a, b)| a - b).collect();
            let dz: Vec<C64> = xn.z.iter().zip(&pt.x.z).map(|(a, b)| a - b).collect();
            let ascent = dot(&pt.gp, &pt.gz, &dp, &dz);
            let cand = ctx.point(xn, y, c);
            if cand.value >= reference + ARMIJO * ascent.max(0.0) {
                break Some((cand, dp, dz));
            }
            // Near a maximizer the gain drops below rounding noise in the value;
            // fall back on the slope along the step, which stays accurate.
            let noise = VALUE_NOISE * (1.0 + pt.value.abs());
            if ascent > 0.0
                && cand.value >= pt.value - noise
                && dot(&cand.gp, &cand.gz, &dp, &dz) >= -APPROX_WOLFE * ascent
            {
                break Some((cand, dp, dz));
            }
            trial_step *= 0.5;
            if trial_step < MIN_STEP {
                break None;
            }
        };
        let Some((next, dp, dz)) = accepted else {
            stalled = true;
            break;
        };
        let yp: Vec<f64> = next.gp.iter().zip(&pt.gp).map(|(a, b)| a - b).collect();
        let yz: Vec<C64> = next.gz.iter().zip(&pt.gz).map(|(a, b)| a - b).collect();
        // Barzilai-Borwein length in the metric that makes `dz` the gradient
        let ss = dp.iter().map(|d| d * d).sum::<f64>() + weighted_sq(ctx.layout, &pt.x.p, &dz);
        let sy = dot(&dp, &dz, &yp, &yz);
        // ascent on a locally concave function has s·Δgrad < 0
        step = if sy < 0.0 {
            ss / -sy
        } else {
            MAX_STEP.min(trial_step * 4.0)
        };
        step = step.clamp(MIN_STEP * 16.0, MAX_STEP);

        pt = next;
        if history.len() == NONMONOTONE_WINDOW {
            history.pop_front();
        }
        history.push_back(pt.value);
        stat = ctx.stationarity(&pt);
    }
    InnerOutcome {
        pt,
        iters,
        stat,
        stalled,
    }
}

/// Damped Newton iterations on `½‖ρ − ϱ‖²`, the inner problem at `y = ½`,
/// `c = 0`. When `ϱ` is itself a mixture of product states this residual
/// vanishes at the optimum, where the multiplier iteration alone converges
/// slowly: every product state then prices at zero and the weights are free
/// to drift along a flat valley.
fn polish_distance(ctx: &Context, mut x: Vars, max_iter: usize) -> (Vars, f64) {
    let mut dist = distance_sq(ctx.target, ctx.layout, &x);
    let Some(mut model) = Model::new(ctx.target, ctx.layout, &x, (0.5, 0.0, ctx.norm_sq), false)
    else {
        return (x, dist);
    };
    let mu0 = model.initial_damping();
    let mut mu = mu0;
    let mut nu = 2.0;
    for _ in 0..max_iter {
        if dist <= POLISH_FLOOR {
            break;
        }
        let Some(step) = model.step(ctx.layout, &x, mu) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let cand = distance_sq(ctx.target, ctx.layout, &step.x);
        let gain = 0.5 * (dist - cand);
        if gain > 0.0 {
            let ratio = gain / step.predicted.max(f64::MIN_POSITIVE);
            mu *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            x = step.x;
            dist = cand;
            match Model::new(ctx.target, ctx.layout, &x, (0.5, 0.0, ctx.norm_sq), false) {
                Some(m) => model = m,
                None => break,
            }
        } else {
            mu *= nu;
            nu *= 2.0;
        }
        if mu > MAX_DAMPING * mu0 {
            break;
        }
    }
    (x, dist)
}

fn fidelity(layout: &Layout, x: &Vars, k: usize, t: usize) -> f64 {
    (0..layout.dims.len())
        .map(|i| inner(x.factor(layout, k, i), x.factor(layout, t, i)).norm_sqr())
        .product()
}

/// Candidate merges: the most similar pairs, and the lightest term with its
/// nearest neighbour.
fn merge_candidates(layout: &Layout, x: &Vars) -> Vec<(usize, usize)> {
    let active: Vec<usize> = (0..layout.terms).filter(|&k| x.p[k] > 0.0).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a, &k) in active.iter().enumerate() {
        for &t in &active[a + 1..] {
            pairs.push((fidelity(layout, x, k, t), k, t));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(usize, usize)> = pairs
        .iter()
        .take(MERGE_CANDIDATES)
        .map(|&(_, k, t)| (k, t))
        .collect();
    let lightest = active
        .iter()
        .copied()
        .min_by(|&a, &b| x.p[a].total_cmp(&x.p[b]));
    if let Some(l) = lightest {
        let nearest = pairs.iter().find(|&&(_, k, t)| k == l || t == l);
        if let Some(&(_, k, t)) = nearest {
            if !out.contains(&(k, t)) {
                out.push((k, t));
            }
        }
    }
    out
}

/// Replaces terms `k` and `t` by one term carrying both weights, with each
/// factor the phase-aligned weighted average of the two.
fn merge_pair(layout: &Layout, x: &Vars, k: usize, t: usize) -> Vars {
    let mut out = x.clone();
    let (pk, pt) = (x.p[k], x.p[t]);
    for i in 0..layout.dims.len() {
        let a = x.factor(layout, k, i);
        let b = x.factor(layout, t, i);
        let overlap = inner(b, a);
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let r = layout.range(k, i);
        for ((z, u), v) in out.z[r].iter_mut().zip(a).zip(b) {
            *z = u * pk + v * phase * pt;
        }
    }
    out.p[k] = pk + pt;
    out.p[t] = 0.0;
    out.normalize_factors(layout);
    merge_within(layout, &mut out, CLONE_TOL);
    out
}

/// [`polish_distance`], then greedy merging of terms as long as the
/// re-polished residual keeps shrinking. Terms split around one product
/// state of `ϱ` are the typical leftover of the multiplier phase, and the
/// residual shrinks only quadratically in their spread.
fn reduce_and_polish(ctx: &Context, mut x: Vars) -> (Vars, f64) {
    for p in x.p.iter_mut() {
        if *p < ZERO_WEIGHT_TOL {
            *p = 0.0;
        }
    }
    let sum: f64 = x.p.iter().sum();
    x.p.iter_mut().for_each(|p| *p /= sum);
    // clones of one state (idle terms revived together) merge for free
    merge_within(ctx.layout, &mut x, CLONE_TOL);
    let (mut best, mut best_dist) = polish_distance(ctx, x, POLISH_ITERS);
    while best_dist > POLISH_FLOOR {
        // short trial polishes rank the candidates; the winner gets a full one
        let trial = merge_candidates(ctx.layout, &best)
            .into_iter()
            .map(|(k, t)| polish_distance(ctx, merge_pair(ctx.layout, &best, k, t), TRIAL_ITERS))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((cand, _)) = trial else {
            break;
        };
        let (cand, dist) = polish_distance(ctx, cand, POLISH_ITERS);
        if dist >= best_dist {
            break;
        }
        best = cand;
        best_dist = dist;
    }
    (best, best_dist)
}

/// [`reduce_and_polish`] from `x`, kept only if it lands on `ϱ` within the
/// stationarity tolerance with the norm constraint met.
fn try_polish(ctx: &Context, x: &Vars, cfg: &SolverConfig) -> Option<Vars> {
    let (x, dist) = reduce_and_polish(ctx, x.clone());
    let gap = (evaluate(ctx.target, ctx.layout, &x).g - ctx.norm_sq).abs();
    let resolved = dist.sqrt() <= 0.1 * cfg.stat_tol && gap <= cfg.feas_tol;
    resolved.then_some(x)
}

/// Levenberg-Marquardt iterations on the same inner problem; used once
/// gradient steps slow down. Returns `None` when the model is not concave.
fn inner_lm(
    ctx: &Context,
    mut pt: Point,
    y: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<InnerOutcome, Box<Point>> {
    let Some(mut model) = Model::new(ctx.target, ctx.layout, &pt.x, (y, c, ctx.norm_sq), true)
    else {
        return Err(Box::new(pt));
    };
    let mut mu = model.initial_damping();
    let mut nu = 2.0;
    let mut stat = ctx.stationarity(&pt);
    let mut iters = 0;
    let mut stalled = false;
    while stat > tol && iters < max_iter {
        iters += 1;
        let Some(step) = model.step(ctx.layout, &pt.x, mu) else {
            // damping too weak to make the model concave
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e300 {
                stalled = true;
                break;
            }
            continue;
        };
        let noise = VALUE_NOISE * (1.0 + pt.value.abs());
        let cand = ctx.point(step.x, y, c);
        let actual = cand.value - pt.value;
        if step.predicted <= 10.0 * noise {
            // Gains below the value resolution: judge the step by the
            // stationarity measure, which is still accurate here.
            let cand_stat = ctx.stationarity(&cand);
            if actual >= -10.0 * noise && cand_stat < 0.9 * stat {
                pt = cand;
                stat = cand_stat;
                match Model::new(ctx.target, ctx.layout, &pt.x, (y, c, ctx.norm_sq), true) {
                    Some(m) => model = m,
                    None => break,
                }
                continue;
            }
            if mu > model.initial_damping() * 1e6 {
                stalled = true;
                break;
            }
            mu *= nu;
            nu *= 2.0;
            continue;
        }
        let ratio = actual / step.predicted.max(f64::MIN_POSITIVE);
        if actual > 0.0 || (actual >= -noise && step.predicted <= 10.0 * noise) {
            mu *= (1.0 - (2.0 * ratio - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            pt = cand;
            stat = ctx.stationarity(&pt);
            match Model::new(ctx.target, ctx.layout, &pt.x, (y, c, ctx.norm_sq), true) {
                Some(m) => model = m,
                None => break,
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e300 {
                stalled = true;
                break;
            }
        }
    }
    Ok(InnerOutcome {
        pt,
        iters,
        stat,
        stalled,
    })
}

pub(crate) fn run(ctx: &Context, x0: Vars, initial_y: f64, cfg: &SolverConfig) -> RunOutcome {
    let final_tol = 0.1 * cfg.stat_tol;
    let mut y = initial_y;
    let mut c = cfg.initial_penalty;
    let mut pt = ctx.point(x0, y, c);
    let mut prev_gap = f64::INFINITY;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    let mut polish_mark = POLISH_GAP;
    let mut polished = None;

    while outer < cfg.max_outer {
        outer += 1;
        let tol = final_tol.max(10f64.powi(-(outer as i32) - 1));
        let budget = cfg.max_inner.min(GRADIENT_BUDGET);
        let mut inner = inner_solve(ctx, pt, y, c, tol, budget);
        if inner.stat > tol && cfg.max_inner > inner.iters {
            let used = inner.iters;
            inner = match inner_lm(ctx, inner.pt, y, c, tol, cfg.max_inner - used) {
                Ok(mut o) => {
                    o.iters += used;
                    o
                }
                Err(pt) => {
                    let mut o = inner_solve(ctx, *pt, y, c, tol, cfg.max_inner - used);
                    o.iters += used;
                    o
                }
            };
        }
        pt = inner.pt;
        inner_total += inner.iters;
        let h = pt.ev.g - ctx.norm_sq;
        let gap = h.abs();
        if gap <= cfg.feas_tol && inner.stat <= final_tol {
            converged = true;
            break;
        }
        let dist = distance_sq(ctx.target, ctx.layout, &pt.x);
        if dist <= polish_mark {
            polish_mark = dist * POLISH_RETRY;
            if let Some(x) = try_polish(ctx, &pt.x, cfg) {
                polished = Some(x);
                converged = true;
                break;
            }
        }
        if gap <= cfg.feas_tol && inner.stalled {
            // feasible and at the accuracy limit; the caller judges optimality
            break;
        }
        y += c * h;
        if gap > cfg.feas_tol && gap > 0.25 * prev_gap {
            c = (c * cfg.penalty_growth).min(MAX_PENALTY);
        }
        prev_gap = gap;
        merge_duplicates(ctx.layout, &mut pt.x);
        // refresh value and gradient for the new (y, c)
        pt = ctx.point(pt.x, y, c);
    }

    let mut vars = match polished {
        Some(x) => x,
        None => pt.x,
    };
    if !converged && distance_sq(ctx.target, ctx.layout, &vars) <= polish_mark {
        // last chance at the final iterate; keep it only if it stays feasible
        let (x, _) = reduce_and_polish(ctx, vars.clone());
        if (evaluate(ctx.target, ctx.layout, &x).g - ctx.norm_sq).abs() <= cfg.feas_tol {
            vars = x;
        }
    }
    RunOutcome {
        vars,
        outer_iterations: outer,
        inner_iterations: inner_total,
    }
}
