//! Multiplier recovery and residuals of the first-order optimality system.
//!
//! At a candidate ensemble the optimality system reads, for every term `k`
//! and subsystem `i`,
//!
//! ```text
//! p_k c_ik = μ_k φ_ik + λ p_k v_ik                  (stationarity in φ_ik)
//! e_k      = λ S_k + κ − τ_k                         (stationarity in p_k)
//! τ_k ≥ 0,  p_k ≥ 0,  τ_k p_k = 0
//! ```
//!
//! together with feasibility, where `e_k = ⟨Φ_k|ϱ|Φ_k⟩`,
//! `S_k = Σ_t p_t |⟨Φ_k|Φ_t⟩|²` and `c_ik`, `v_ik` are the partial
//! contractions of the objective and of the norm constraint.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};

use super::model::{evaluate, Evaluation, Layout, Target, Vars};
use crate::error::{Error, Result};
use crate::states::{inner, DensityMatrix, RawEnsemble, SeparableEnsemble, C64};

/// Weights above this are active in multiplier recovery.
pub const DEFAULT_ACT_TOL: f64 = 1e-8;
/// Largest tolerated imaginary part of quantities that are real in exact arithmetic.
pub const REALNESS_TOL: f64 = 1e-10;

/// Which equations pin down `λ` and `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiplierFit {
    /// Only the weight equations `e_k = λ S_k + κ` over the active set.
    ActiveScalar,
    /// The weight equations plus the tangential part of the factor
    /// stationarity equations, which also depend on `λ`.
    #[default]
    FullSystem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktMultipliers {
    /// Multiplier of the norm constraint.
    pub lambda: f64,
    /// Multiplier of `Σ p_k = 1`.
    pub kappa: f64,
    /// Factor-normalization multipliers, one per term (equal across subsystems).
    pub mu: Vec<f64>,
    /// Multipliers of `p_k ≥ 0`.
    pub tau: Vec<f64>,
}

impl KktMultipliers {
    /// `λ‖ϱ‖² + κ`.
    pub fn eigenvalue(&self, norm_sq: f64) -> f64 {
        self.lambda * norm_sq + self.kappa
    }

    /// `|κ − Σ μ_k|`.
    pub fn mu_sum_gap(&self) -> f64 {
        (self.kappa - self.mu.iter().sum::<f64>()).abs()
    }
}

/// Residual blocks of the optimality system, each a max-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `max_{i,k} ‖p_k c_ik − μ_k φ_ik − λ p_k v_ik‖`.
    pub stationarity: f64,
    /// `(k, i)` where `stationarity` is attained.
    pub worst_factor: (usize, usize),
    /// `max_k |e_k − λ S_k − κ + τ_k|`.
    pub scalar: f64,
    /// `max_k max(|τ_k p_k|, −τ_k, −p_k)`.
    pub complementarity: f64,
    /// Largest constraint violation.
    pub feasibility: f64,
    /// `|κ − Σ μ_k|`; an identity at exact solutions, reported but not part of `max`.
    pub mu_sum_gap: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.scalar)
            .max(self.complementarity)
            .max(self.feasibility)
    }
}

/// Recovers `(λ, κ, μ, τ)` at `e` with the default activity threshold.
pub fn recover_multipliers(
    rho: &DensityMatrix,
    e: &SeparableEnsemble,
    fit: MultiplierFit,
) -> Result<KktMultipliers> {
    recover_multipliers_with(rho, &RawEnsemble::from(e), fit, DEFAULT_ACT_TOL)
}

/// `λ` and `κ` minimize the residual of the chosen equations subject to
/// `τ_k ≥ 0` on the inactive terms (minimum-norm when the equations leave
/// them underdetermined); then `μ_k = p_k(e_k − λ S_k)`, `τ_k = 0` on the
/// active set and `τ_k = λ S_k + κ − e_k` off it.
pub fn recover_multipliers_with(
    rho: &DensityMatrix,
    e: &RawEnsemble,
    fit: MultiplierFit,
    act_tol: f64,
) -> Result<KktMultipliers> {
    let (layout, vars, ev) = prepare(rho, e)?;
    multipliers_from(&layout, &vars, &ev, fit, act_tol)
}

pub(crate) fn multipliers_from(
    layout: &Layout,
    x: &Vars,
    ev: &Evaluation,
    fit: MultiplierFit,
    act_tol: f64,
) -> Result<KktMultipliers> {
    if ev.e_imag > REALNESS_TOL {
        return Err(Error::ImaginaryComponent {
            quantity: "expectation ⟨Φ_k|ϱ|Φ_k⟩".into(),
            magnitude: ev.e_imag,
        });
    }
    let active: Vec<usize> = (0..layout.terms).filter(|&k| x.p[k] > act_tol).collect();
    if active.is_empty() {
        return Err(Error::EmptyActiveSet(act_tol));
    }

    let mut normal = Matrix2::<f64>::zeros();
    let mut rhs = Vector2::<f64>::zeros();
    let mut add_row = |a: [f64; 2], b: f64| {
        let av = Vector2::new(a[0], a[1]);
        normal += av * av.transpose();
        rhs += av * b;
    };
    for &k in &active {
        add_row([ev.s[k], 1.0], ev.e[k]);
    }
    if fit == MultiplierFit::FullSystem {
        for &k in &active {
            let pk = x.p[k];
            for i in 0..layout.dims.len() {
                let r = layout.range(k, i);
                let phi = &x.z[r.clone()];
                for ((cv, vv), f) in ev.c[r.clone()].iter().zip(&ev.v[r]).zip(phi) {
                    let coef = (vv - f * ev.s[k]) * pk;
                    let target = (cv - f * ev.e[k]) * pk;
                    add_row([coef.re, 0.0], target.re);
                    add_row([coef.im, 0.0], target.im);
                }
            }
        }
    }

    let constraints: Vec<([f64; 2], f64)> = (0..layout.terms)
        .filter(|&k| x.p[k] <= act_tol)
        .map(|k| ([ev.s[k], 1.0], ev.e[k]))
        .collect();
    let sol = constrained_least_squares(normal, rhs, &constraints);

    let (lambda, kappa) = (sol[0], sol[1]);

    let mu = (0..layout.terms)
        .map(|k| x.p[k] * (ev.e[k] - lambda * ev.s[k]))
        .collect();
    let tau = (0..layout.terms)
        .map(|k| {
            if x.p[k] > act_tol {
                0.0
            } else {
                lambda * ev.s[k] + kappa - ev.e[k]
            }
        })
        .collect();
    Ok(KktMultipliers {
        lambda,
        kappa,
        mu,
        tau,
    })
}

/// Minimizes `xᵀMx − 2rᵀx` over `x ∈ R²` subject to `a_j·x ≥ b_j`, taking
/// the minimum-norm minimizer when it is not unique.
///
/// With two variables the minimizer is the best feasible point among the
/// unconstrained minimizer, the minimizers on each constraint line, and the
/// pairwise vertices.
fn constrained_least_squares(
    normal: Matrix2<f64>,
    rhs: Vector2<f64>,
    constraints: &[([f64; 2], f64)],
) -> Vector2<f64> {
    let scale = normal.trace().abs().max(f64::MIN_POSITIVE);
    let cost = |x: &Vector2<f64>| (x.transpose() * normal * x)[0] - 2.0 * rhs.dot(x);
    let slack_tol = |b: f64| 1e-12 * (1.0 + b.abs());
    let feasible = |x: &Vector2<f64>| {
        constraints
            .iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] >= b - slack_tol(*b))
    };

    // lightly ridged solve in the eigenbasis; directions without curvature
    // are left at zero, which avoids amplifying rounding noise in `rhs`
    let ridge = 1e-13 * (1.0 + scale);
    let eig = SymmetricEigen::new(normal);
    let mut x0 = Vector2::zeros();
    for j in 0..2 {
        let v = eig.eigenvectors.column(j);
        if eig.eigenvalues[j] > ridge {
            x0 += v * (v.dot(&rhs) / (eig.eigenvalues[j] + ridge));
        }
    }
    if feasible(&x0) {
        return x0;
    }

    let mut best: Option<(f64, Vector2<f64>)> = None;
    let mut consider = |x: Vector2<f64>| {
        if x.iter().all(|v| v.is_finite()) && feasible(&x) {
            let c = cost(&x);
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, x));
            }
        }
    };
    for (a, b) in constraints {
        let av = Vector2::new(a[0], a[1]);
        let a2 = av.norm_squared();
        if a2 == 0.0 {
            continue;
        }
        // x = base + t·d runs along the line a·x = b
        let base = av * (b / a2);
        let d = Vector2::new(-a[1], a[0]) / a2.sqrt();
        let q = d.dot(&(normal * d));
        let t = if q > ridge {
            -d.dot(&(normal * base - rhs)) / q
        } else {
            -d.dot(&base)
        };
        consider(base + d * t);
    }
    for (j, (a1, b1)) in constraints.iter().enumerate() {
        for (a2, b2) in &constraints[j + 1..] {
            let sys = Matrix2::new(a1[0], a1[1], a2[0], a2[1]);
            if sys.determinant().abs() > 1e-14 {
                if let Some(inv) = sys.try_inverse() {
                    consider(inv * Vector2::new(*b1, *b2));
                }
            }
        }
    }
    best.map(|(_, x)| x).unwrap_or(x0)
}

/// All residual blocks at `e` for the given multipliers.
pub fn kkt_report(
    rho: &DensityMatrix,
    e: &SeparableEnsemble,
    mult: &KktMultipliers,
) -> Result<KktReport> {
    kkt_report_raw(rho, &RawEnsemble::from(e), mult)
}

pub fn kkt_report_raw(
    rho: &DensityMatrix,
    e: &RawEnsemble,
    mult: &KktMultipliers,
) -> Result<KktReport> {
    let (layout, vars, ev) = prepare(rho, e)?;
    check_mult_len(&layout, mult)?;
    Ok(report_from(
        &layout,
        &vars,
        &ev,
        mult,
        super::frobenius_target(rho),
    ))
}

/// The largest entry of [`kkt_report`].
pub fn kkt_residual(
    rho: &DensityMatrix,
    e: &SeparableEnsemble,
    mult: &KktMultipliers,
) -> Result<f64> {
    Ok(kkt_report(rho, e, mult)?.max())
}

pub(crate) fn report_from(
    layout: &Layout,
    x: &Vars,
    ev: &Evaluation,
    mult: &KktMultipliers,
    norm_sq_target: f64,
) -> KktReport {
    let m = layout.dims.len();
    let mut stationarity = 0.0f64;
    let mut worst_factor = (0, 0);
    let mut scalar = 0.0f64;
    let mut complementarity = 0.0f64;
    let mut unit_gap = 0.0f64;
    for k in 0..layout.terms {
        let pk = x.p[k];
        for i in 0..m {
            let r = layout.range(k, i);
            let phi = &x.z[r.clone()];
            let res: f64 = ev.c[r.clone()]
                .iter()
                .zip(&ev.v[r])
                .zip(phi)
                .map(|((cv, vv), f)| {
                    (cv * pk - f * mult.mu[k] - vv * (mult.lambda * pk)).norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            if res > stationarity {
                stationarity = res;
                worst_factor = (k, i);
            }
            unit_gap = unit_gap.max((inner(phi, phi).re - 1.0).abs());
        }
        scalar = scalar.max((ev.e[k] - mult.lambda * ev.s[k] - mult.kappa + mult.tau[k]).abs());
        complementarity = complementarity
            .max((mult.tau[k] * pk).abs())
            .max(-mult.tau[k])
            .max(-pk);
    }
    let simplex_gap = (x.p.iter().sum::<f64>() - 1.0).abs();
    let norm_gap = (ev.g - norm_sq_target).abs();
    KktReport {
        stationarity,
        worst_factor,
        scalar,
        complementarity,
        feasibility: norm_gap.max(simplex_gap).max(unit_gap),
        mu_sum_gap: mult.mu_sum_gap(),
    }
}

/// `μ_ik` obtained separately for every subsystem `i` by contracting the
/// factor stationarity equation with `⟨φ_ik|`: `⟨φ_ik| (p_k c_ik − λ p_k v_ik)`.
pub fn mu_by_subsystem(
    rho: &DensityMatrix,
    e: &SeparableEnsemble,
    lambda: f64,
) -> Result<Vec<Vec<C64>>> {
    let (layout, x, ev) = prepare(rho, &RawEnsemble::from(e))?;
    Ok((0..layout.terms)
        .map(|k| {
            (0..layout.dims.len())
                .map(|i| {
                    let r = layout.range(k, i);
                    let proj: Vec<C64> = ev.c[r.clone()]
                        .iter()
                        .zip(&ev.v[r.clone()])
                        .map(|(cv, vv)| (cv - vv * lambda) * x.p[k])
                        .collect();
                    inner(&x.z[r], &proj)
                })
                .collect()
        })
        .collect())
}

fn prepare(rho: &DensityMatrix, e: &RawEnsemble) -> Result<(Layout, Vars, Evaluation)> {
    rho.shape().ensure_same(&e.shape)?;
    e.check_lengths()?;
    let layout = Layout::new(&e.shape, e.len());
    let vars = Vars::from_raw(&layout, e);
    let ev = evaluate(&Target::new(rho), &layout, &vars);
    Ok((layout, vars, ev))
}

fn check_mult_len(layout: &Layout, mult: &KktMultipliers) -> Result<()> {
    for (what, len) in [("mu", mult.mu.len()), ("tau", mult.tau.len())] {
        if len != layout.terms {
            return Err(Error::LengthMismatch {
                what: if what == "mu" {
                    "multipliers mu"
                } else {
                    "multipliers tau"
                },
                expected: layout.terms,
                got: len,
            });
        }
    }
    Ok(())
}
