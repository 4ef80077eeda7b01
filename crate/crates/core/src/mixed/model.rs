//! Objective, norm constraint and their gradients on the ensemble parameters.
//!
//! Terms are stored flat: the factors of term `k` are laid end to end in
//! `z[k*D .. (k+1)*D]` with `D = Σ d_i`. Gradients with respect to a complex
//! factor are reported in the real sense, `∂/∂x + i ∂/∂y` for `φ = x + iy`.

use crate::states::{
    contract_except, inner, vec_norm, DensityMatrix, RawEnsemble, SeparableEnsemble, SpaceShape,
    C64,
};

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub shape: SpaceShape,
    pub terms: usize,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub width: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(shape: &SpaceShape, terms: usize) -> Self {
        Self {
            shape: shape.clone(),
            terms,
            dims: shape.dims().to_vec(),
            offsets: shape.factor_offsets(),
            width: shape.local_dim_sum(),
            n: shape.total_dim(),
        }
    }

    #[inline]
    pub fn range(&self, k: usize, i: usize) -> std::ops::Range<usize> {
        let start = k * self.width + self.offsets[i];
        start..start + self.dims[i]
    }
}

/// Weights and flattened factors of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Vars {
    pub p: Vec<f64>,
    pub z: Vec<C64>,
}

impl Vars {
    pub fn from_raw(layout: &Layout, e: &RawEnsemble) -> Self {
        let mut z = Vec::with_capacity(layout.terms * layout.width);
        for term in &e.factors {
            for f in term {
                z.extend_from_slice(f);
            }
        }
        Self {
            p: e.weights.clone(),
            z,
        }
    }

    pub fn from_ensemble(layout: &Layout, e: &SeparableEnsemble) -> Self {
        Self::from_raw(layout, &RawEnsemble::from(e))
    }

    pub fn factor<'a>(&'a self, layout: &Layout, k: usize, i: usize) -> &'a [C64] {
        &self.z[layout.range(k, i)]
    }

    pub fn to_raw(&self, layout: &Layout) -> RawEnsemble {
        let factors = (0..layout.terms)
            .map(|k| {
                (0..layout.dims.len())
                    .map(|i| self.factor(layout, k, i).to_vec())
                    .collect()
            })
            .collect();
        RawEnsemble {
            shape: layout.shape.clone(),
            weights: self.p.clone(),
            factors,
        }
    }

    pub fn normalize_factors(&mut self, layout: &Layout) {
        for k in 0..layout.terms {
            for i in 0..layout.dims.len() {
                let r = layout.range(k, i);
                let norm = vec_norm(&self.z[r.clone()]);
                if norm > 0.0 {
                    self.z[r].iter_mut().for_each(|a| *a /= norm);
                }
            }
        }
    }
}

/// Everything the solver and the certificate checks need at one point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    /// `Σ p_k e_k`.
    pub f: f64,
    /// `Σ_{r,s} p_r p_s |⟨Φ_r|Φ_s⟩|²`.
    pub g: f64,
    /// `e_k = ⟨Φ_k|ϱ|Φ_k⟩` (real part).
    pub e: Vec<f64>,
    /// Largest `|Im ⟨Φ_k|ϱ|Φ_k⟩|`.
    pub e_imag: f64,
    /// `S_k = Σ_t p_t |⟨Φ_k|Φ_t⟩|²`.
    pub s: Vec<f64>,
    /// `c_ik = (⊗_{j≠i}⟨φ_j^k|) ϱ |Φ_k⟩`, flat like `Vars::z`.
    pub c: Vec<C64>,
    /// `v_ik = Σ_t p_t Π_{j≠i}|⟨φ_j^k|φ_j^t⟩|² ⟨φ_i^t|φ_i^k⟩ φ_i^t`, flat.
    pub v: Vec<C64>,
}

/// Dense target matrix in row-major order for fast products.
#[derive(Debug, Clone)]
pub(crate) struct Target {
    pub rows: Vec<C64>,
    pub n: usize,
}

impl Target {
    pub fn new(rho: &DensityMatrix) -> Self {
        Self {
            rows: rho.to_row_major(),
            n: rho.dim(),
        }
    }

    fn apply(&self, v: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = inner_plain(&self.rows[r * self.n..(r + 1) * self.n], v);
        }
    }
}

#[inline]
fn inner_plain(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn evaluate(target: &Target, layout: &Layout, x: &Vars) -> Evaluation {
    let n_terms = layout.terms;
    let m = layout.dims.len();
    let n = layout.n;

    // expectation values and contractions
    let mut e = vec![0.0; n_terms];
    let mut e_imag = 0.0f64;
    let mut c = vec![C64::new(0.0, 0.0); x.z.len()];
    let mut full = vec![C64::new(0.0, 0.0); n];
    let mut applied = vec![C64::new(0.0, 0.0); n];
    for k in 0..n_terms {
        let factors: Vec<&[C64]> = (0..m).map(|i| x.factor(layout, k, i)).collect();
        kron_into(&factors, &mut full);
        target.apply(&full, &mut applied);
        let ek = inner(&full, &applied);
        e[k] = ek.re;
        e_imag = e_imag.max(ek.im.abs());
        for i in 0..m {
            let ci = contract_except(&layout.shape, &applied, &factors, i);
            c[layout.range(k, i)].copy_from_slice(&ci);
        }
    }

    // per-subsystem Gram matrices ⟨φ_j^k|φ_j^t⟩
    let mut gram = vec![C64::new(0.0, 0.0); m * n_terms * n_terms];
    let gidx = |j: usize, k: usize, t: usize| (j * n_terms + k) * n_terms + t;
    for j in 0..m {
        for k in 0..n_terms {
            let fk = x.factor(layout, k, j);
            for t in k..n_terms {
                let val = inner(fk, x.factor(layout, t, j));
                gram[gidx(j, k, t)] = val;
                gram[gidx(j, t, k)] = val.conj();
            }
        }
    }

    let mut s = vec![0.0; n_terms];
    let mut v = vec![C64::new(0.0, 0.0); x.z.len()];
    let mut abs2 = vec![0.0; m];
    for k in 0..n_terms {
        for t in 0..n_terms {
            let pt = x.p[t];
            if pt == 0.0 {
                continue;
            }
            for j in 0..m {
                abs2[j] = gram[gidx(j, k, t)].norm_sqr();
            }
            s[k] += pt * abs2.iter().product::<f64>();
            for i in 0..m {
                let w: f64 = (0..m).filter(|&j| j != i).map(|j| abs2[j]).product();
                if w == 0.0 {
                    continue;
                }
                let coeff = gram[gidx(i, t, k)] * (pt * w);
                let src = layout.range(t, i);
                let dst = layout.range(k, i);
                for (a, b) in dst.zip(src) {
                    v[a] += coeff * x.z[b];
                }
            }
        }
    }

    let f = x.p.iter().zip(&e).map(|(p, ek)| p * ek).sum();
    let g = x.p.iter().zip(&s).map(|(p, sk)| p * sk).sum();
    Evaluation {
        f,
        g,
        e,
        e_imag,
        s,
        c,
        v,
    }
}

fn kron_into(factors: &[&[C64]], out: &mut [C64]) {
    out[0] = C64::new(1.0, 0.0);
    let mut len = 1;
    for f in factors {
        let d = f.len();
        // expand in place from the back
        for a in (0..len).rev() {
            let base = out[a];
            for b in (0..d).rev() {
                out[a * d + b] = base * f[b];
            }
        }
        len *= d;
    }
}

/// Analytic gradients of the objective `Σ p_k ⟨Φ_k|ϱ|Φ_k⟩` and of the norm
/// constraint `Σ_{r,s} p_r p_s |⟨Φ_r|Φ_s⟩|²`, taken in the real
/// parameterization `φ = x + iy` of every factor. Factor gradients are
/// reported as `∂/∂x + i ∂/∂y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub objective: f64,
    pub norm_squared: f64,
    pub objective_weights: Vec<f64>,
    pub objective_factors: Vec<Vec<Vec<C64>>>,
    pub norm_weights: Vec<f64>,
    pub norm_factors: Vec<Vec<Vec<C64>>>,
}

pub(crate) fn gradients_at(target: &Target, layout: &Layout, x: &Vars) -> Gradients {
    let ev = evaluate(target, layout, x);
    let m = layout.dims.len();
    let per_term = |scale: f64, src: &[C64]| -> Vec<Vec<Vec<C64>>> {
        (0..layout.terms)
            .map(|k| {
                (0..m)
                    .map(|i| {
                        src[layout.range(k, i)]
                            .iter()
                            .map(|z| z * (scale * x.p[k]))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    Gradients {
        objective: ev.f,
        norm_squared: ev.g,
        objective_weights: ev.e.clone(),
        objective_factors: per_term(2.0, &ev.c),
        norm_weights: ev.s.iter().map(|s| 2.0 * s).collect(),
        norm_factors: per_term(4.0, &ev.v),
    }
}
