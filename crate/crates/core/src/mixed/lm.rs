//! Levenberg-Marquardt steps for the inner problem.
//!
//! The objective and the norm constraint depend on the ensemble only through
//! `ρ = Σ p_k |Φ_k⟩⟨Φ_k|`: `f = tr(ϱρ)` and `g = ‖ρ‖²`. The augmented
//! Lagrangian is therefore a concave function of `ρ` whenever the effective
//! multiplier `s = y + c·h` is positive, with `ρ`-gradient `ϱ − 2sρ` and
//! curvature `M = 2s·I + 4c·ρρᵀ` (negated). With `J` the Jacobian of `ρ`
//! in the step coordinates, the Hessian is `−JᵀMJ` plus the curvature of the
//! parameterization contracted with the `ρ`-gradient; the latter does not
//! vanish at optima on the boundary of the separable set, so it is kept. The
//! model is maximized with Levenberg damping, `(H + μI) δ = g`.
//!
//! Unlike plain gradient steps this resolves weights that should vanish in a
//! few iterations: their columns let the step overshoot to negative values,
//! which the simplex projection clips to exactly zero.

use nalgebra::{DMatrix, DVector};

use super::model::{Layout, Target, Vars};
use super::simplex::project_simplex;
use crate::states::{inner, kron_vectors, C64};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Real coordinates of a Hermitian matrix in which the Frobenius inner
/// product is the Euclidean one: diagonal entries, then `√2·Re` and `√2·Im`
/// of each strictly upper entry.
fn herm_vec(n: usize, entry: impl Fn(usize, usize) -> C64) -> DVector<f64> {
    let mut v = DVector::zeros(n * n);
    let mut idx = 0;
    for a in 0..n {
        v[idx] = entry(a, a).re;
        idx += 1;
    }
    for a in 0..n {
        for b in a + 1..n {
            let z = entry(a, b);
            v[idx] = SQRT2 * z.re;
            v[idx + 1] = SQRT2 * z.im;
            idx += 2;
        }
    }
    v
}

/// `|x⟩⟨y| + |y⟩⟨x|` in [`herm_vec`] coordinates.
fn sym_outer(x: &[C64], y: &[C64]) -> DVector<f64> {
    herm_vec(x.len(), |a, b| x[a] * y[b].conj() + y[a] * x[b].conj())
}

pub(crate) struct Step {
    pub x: Vars,
    /// Increase of the model.
    pub predicted: f64,
}

/// The quadratic model at one point, in the coordinates of its columns.
pub(crate) struct Model {
    /// Gradient of the augmented Lagrangian.
    g: DVector<f64>,
    /// Negated Hessian: Gauss-Newton part `JᵀMJ` minus the curvature of the
    /// parameterization weighted by the `ρ`-gradient.
    h: DMatrix<f64>,
    /// What each column moves.
    cols: Vec<Column>,
    free: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Column {
    Weight(usize),
    Factor {
        k: usize,
        i: usize,
        a: usize,
        imag: bool,
    },
}

/// `Re⟨x|B|y⟩` for a Hermitian `B` stored row-major.
fn form(b: &[C64], x: &[C64], y: &[C64]) -> f64 {
    let n = x.len();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        let row: C64 = (0..n).map(|c| b[r * n + c] * y[c]).sum();
        acc += x[r].conj() * row;
    }
    acc.re
}

impl Model {
    /// Builds the model at `x`, or `None` when the `ρ`-curvature is not
    /// concave (`s ≤ 0`).
    /// With `revive`, idle terms whose weight gradient beats the active
    /// average join the free weights.
    pub fn new(
        target: &Target,
        layout: &Layout,
        x: &Vars,
        (y, c, norm_sq): (f64, f64, f64),
        revive: bool,
    ) -> Option<Self> {
        let n = layout.n;
        let m_parties = layout.dims.len();
        let states: Vec<Vec<C64>> = (0..layout.terms)
            .map(|k| kron_vectors((0..m_parties).map(|i| x.factor(layout, k, i))))
            .collect();
        let mut rho_m = vec![C64::new(0.0, 0.0); n * n];
        for (phi, &p) in states.iter().zip(&x.p) {
            if p > 0.0 {
                for a in 0..n {
                    for b in 0..n {
                        rho_m[a * n + b] += phi[a] * phi[b].conj() * p;
                    }
                }
            }
        }
        let u = herm_vec(n, |a, b| rho_m[a * n + b]);
        let h = u.norm_squared() - norm_sq;
        let s = y + c * h;
        if !(s > 0.0) {
            return None;
        }
        // ρ-gradient, as a vector and as a matrix
        let grad_m: Vec<C64> = target
            .rows
            .iter()
            .zip(&rho_m)
            .map(|(t, r)| t - r * (2.0 * s))
            .collect();
        let b = herm_vec(n, |r, c| grad_m[r * n + c]);

        let proj: Vec<DVector<f64>> = states.iter().map(|phi| sym_outer(phi, phi) * 0.5).collect();
        let grad_p: Vec<f64> = proj.iter().map(|pk| b.dot(pk)).collect();
        let active: Vec<usize> = (0..layout.terms).filter(|&k| x.p[k] > 0.0).collect();
        let theta: f64 = active.iter().map(|&k| x.p[k] * grad_p[k]).sum();
        // idle terms join when the projected gradient would revive them
        let free: Vec<usize> = (0..layout.terms)
            .filter(|&k| x.p[k] > 0.0 || (revive && grad_p[k] > theta + 1e-12))
            .collect();
        let nf = free.len() as f64;

        let mut cols = Vec::new();
        let mut columns: Vec<DVector<f64>> = Vec::new();
        let mean_p = free
            .iter()
            .fold(DVector::zeros(n * n), |acc: DVector<f64>, &k| {
                acc + &proj[k]
            })
            / nf;
        for &k in &free {
            cols.push(Column::Weight(k));
            columns.push(&proj[k] - &mean_p);
        }
        // per factor column: tangent direction and the product state it moves to
        let mut dirs: Vec<Vec<C64>> = Vec::new();
        let mut bigs: Vec<Vec<C64>> = Vec::new();
        for &k in &active {
            let pk = x.p[k];
            for i in 0..m_parties {
                let phi = x.factor(layout, k, i);
                for a in 0..phi.len() {
                    for imag in [false, true] {
                        let unit = if imag {
                            C64::new(0.0, 1.0)
                        } else {
                            C64::new(1.0, 0.0)
                        };
                        let radial = (phi[a].conj() * unit).re;
                        let d: Vec<C64> = phi
                            .iter()
                            .enumerate()
                            .map(|(bb, f)| {
                                if bb == a {
                                    unit - f * radial
                                } else {
                                    -f * radial
                                }
                            })
                            .collect();
                        let big = kron_vectors((0..m_parties).map(|j| {
                            if j == i {
                                d.as_slice()
                            } else {
                                x.factor(layout, k, j)
                            }
                        }));
                        cols.push(Column::Factor { k, i, a, imag });
                        columns.push(sym_outer(&big, &states[k]) * pk);
                        dirs.push(d);
                        bigs.push(big);
                    }
                }
            }
        }
        let j = DMatrix::from_columns(&columns);
        let g = j.transpose() * &b;
        let mj = &j * (2.0 * s) + &u * ((&u.transpose() * &j) * (4.0 * c));
        let mut hess = j.transpose() * mj;

        // curvature of Σ p_k ⟨Φ_k|B|Φ_k⟩ along the columns
        let weights = free.len();
        let q: Vec<f64> = states.iter().map(|phi| form(&grad_m, phi, phi)).collect();
        let factor_cols: Vec<(usize, Column)> =
            cols.iter().copied().enumerate().skip(weights).collect();
        for (ca, &(ia, col_a)) in factor_cols.iter().enumerate() {
            let Column::Factor { k, i: fa, .. } = col_a else {
                unreachable!()
            };
            let pk = x.p[k];
            let slope = 2.0 * form(&grad_m, &states[k], &bigs[ca]);
            for (w, &kw) in free.iter().enumerate() {
                let dp = if kw == k { 1.0 - 1.0 / nf } else { -1.0 / nf };
                hess[(w, ia)] -= dp * slope;
                hess[(ia, w)] -= dp * slope;
            }
            for (cb, &(ib, col_b)) in factor_cols.iter().enumerate().skip(ca) {
                let Column::Factor { k: kb, i: fb, .. } = col_b else {
                    unreachable!()
                };
                if kb != k {
                    break;
                }
                let mut curv = 2.0 * form(&grad_m, &bigs[ca], &bigs[cb]);
                if fa == fb {
                    curv -= 2.0 * inner(&dirs[ca], &dirs[cb]).re * q[k];
                } else {
                    let both = kron_vectors((0..m_parties).map(|f| {
                        if f == fa {
                            dirs[ca].as_slice()
                        } else if f == fb {
                            dirs[cb].as_slice()
                        } else {
                            x.factor(layout, k, f)
                        }
                    }));
                    curv += 2.0 * form(&grad_m, &states[k], &both);
                }
                hess[(ia, ib)] -= pk * curv;
                if ia != ib {
                    hess[(ib, ia)] -= pk * curv;
                }
            }
        }
        Some(Self {
            g,
            h: hess,
            cols,
            free,
        })
    }

    /// A damping level comparable to the model curvature.
    pub fn initial_damping(&self) -> f64 {
        let scale = self.h.diagonal().iter().copied().fold(0.0, f64::max);
        1e-3 * scale.max(1e-12)
    }

    /// The damped step from `x`, or `None` if the damped model is not concave.
    pub fn step(&self, layout: &Layout, x: &Vars, mu: f64) -> Option<Step> {
        let r = self.h.nrows();
        let sys = &self.h + DMatrix::identity(r, r) * mu;
        let delta = sys.cholesky()?.solve(&self.g);
        let predicted = self.g.dot(&delta) - 0.5 * delta.dot(&(&self.h * &delta));
        Some(Step {
            x: self.apply(layout, x, &delta),
            predicted,
        })
    }

    /// Moves `x` by `delta` in column coordinates.
    fn apply(&self, layout: &Layout, x: &Vars, delta: &DVector<f64>) -> Vars {
        let mut p = x.p.clone();
        let mean: f64 = self
            .cols
            .iter()
            .zip(delta.iter())
            .filter_map(|(c, d)| matches!(c, Column::Weight(_)).then_some(*d))
            .sum::<f64>()
            / self.free.len() as f64;
        let mut z_new = x.z.clone();
        for (col, d) in self.cols.iter().zip(delta.iter()) {
            match *col {
                Column::Weight(k) => p[k] += d - mean,
                Column::Factor { k, i, a, imag } => {
                    let idx = layout.range(k, i).start + a;
                    z_new[idx] += if imag {
                        C64::new(0.0, *d)
                    } else {
                        C64::new(*d, 0.0)
                    };
                }
            }
        }
        // the coordinate steps were tangent-projected; apply the same projection
        for k in 0..layout.terms {
            for i in 0..layout.dims.len() {
                let rg = layout.range(k, i);
                let phi = &x.z[rg.clone()];
                let disp: Vec<C64> = z_new[rg.clone()]
                    .iter()
                    .zip(phi)
                    .map(|(a, b)| a - b)
                    .collect();
                let radial = inner(phi, &disp).re;
                for ((zn, f), dv) in z_new[rg].iter_mut().zip(phi).zip(&disp) {
                    *zn = f + dv - f * radial;
                }
            }
        }
        // only the free weights move; rounding must not revive the others
        let sub: Vec<f64> = self.free.iter().map(|&k| p[k]).collect();
        let mut weights = vec![0.0; p.len()];
        for (&k, w) in self.free.iter().zip(project_simplex(&sub)) {
            weights[k] = w;
        }
        let mut xn = Vars {
            p: weights,
            z: z_new,
        };
        xn.normalize_factors(layout);
        xn
    }
}

/// `‖ρ − ϱ‖²` with `ρ` materialized, free of the cancellation in
/// `‖ρ‖² − 2 tr(ϱρ) + ‖ϱ‖²`.
pub(crate) fn distance_sq(target: &Target, layout: &Layout, x: &Vars) -> f64 {
    let n = layout.n;
    let mut diff: Vec<C64> = target.rows.iter().map(|t| -t).collect();
    for k in (0..layout.terms).filter(|&k| x.p[k] > 0.0) {
        let phi = kron_vectors((0..layout.dims.len()).map(|i| x.factor(layout, k, i)));
        for a in 0..n {
            for b in 0..n {
                diff[a * n + b] += phi[a] * phi[b].conj() * x.p[k];
            }
        }
    }
    diff.iter().map(|z| z.norm_sqr()).sum()
}
