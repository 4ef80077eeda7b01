//! Quantum-state data types over a composite Hilbert space `H_1 ⊗ ... ⊗ H_m`.
//!
//! Basis ordering is row-major over the multi-index `(a_1, ..., a_m)`, with
//! subsystem 1 varying slowest, so two qubits are listed as
//! `|00⟩, |01⟩, |10⟩, |11⟩`.
//!
//! Every type validates its invariants on construction and is immutable
//! afterwards.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance on factor and amplitude normalization.
pub const UNIT_TOL: f64 = 1e-12;
/// Tolerance on Hermiticity, trace and the eigenvalue floor of density matrices.
pub const DENSITY_TOL: f64 = 1e-10;
/// Tolerance on `Σ p_k = 1` for ensemble weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Subsystem dimensions `d_1, ..., d_m` of a composite space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpaceShape {
    dims: Vec<usize>,
}

impl SpaceShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidShape {
                dims,
                reason: "at least two subsystems are required".into(),
            });
        }
        if dims.contains(&0) {
            return Err(Error::InvalidShape {
                dims,
                reason: "subsystem dimensions must be positive".into(),
            });
        }
        Ok(Self { dims })
    }

    /// `m` qubits.
    pub fn qubits(m: usize) -> Result<Self> {
        Self::new(vec![2; m])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of subsystems `m`.
    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    /// Total dimension `n = Π d_k`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of product terms that always suffices to write a disentangled
    /// state, `n² + 1`.
    pub fn caratheodory_bound(&self) -> usize {
        let n = self.total_dim();
        n * n + 1
    }

    /// Sum of the local dimensions; the length of a product state's factors laid end to end.
    pub fn local_dim_sum(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Offset of factor `i` inside the concatenation of all factors.
    pub fn factor_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.dims.len());
        let mut acc = 0;
        for &d in &self.dims {
            offsets.push(acc);
            acc += d;
        }
        offsets
    }

    /// Row-major strides, subsystem 1 slowest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len() - 1).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    /// Splits a flat basis index into its multi-index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut digits = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            digits[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        digits
    }

    /// Joins a multi-index into a flat basis index.
    pub fn flat_index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&a, &d)| acc * d + a)
    }

    pub fn ensure_same(&self, other: &SpaceShape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            })
        }
    }
}

/// A normalized vector in the composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    shape: SpaceShape,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(shape: SpaceShape, amplitudes: Vec<C64>) -> Result<Self> {
        check_len("amplitudes", shape.total_dim(), amplitudes.len())?;
        let norm = vec_norm(&amplitudes);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotNormalized {
                what: "pure state".into(),
                norm,
            });
        }
        Ok(Self { shape, amplitudes })
    }

    /// Normalizes `amplitudes` before validating.
    pub fn normalized(shape: SpaceShape, mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = vec_norm(&amplitudes);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized {
                what: "pure state".into(),
                norm,
            });
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::new(shape, amplitudes)
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// The projector `|Ψ⟩⟨Ψ|`.
    pub fn to_density(&self) -> DensityMatrix {
        let n = self.amplitudes.len();
        let entries = DMatrix::from_fn(n, n, |r, c| self.amplitudes[r] * self.amplitudes[c].conj());
        DensityMatrix {
            shape: self.shape.clone(),
            entries,
        }
    }
}

/// A separable pure state `|φ_1⟩ ⊗ ... ⊗ |φ_m⟩` with unit-norm factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    shape: SpaceShape,
    factors: Vec<Vec<C64>>,
}

impl ProductState {
    pub fn new(shape: SpaceShape, factors: Vec<Vec<C64>>) -> Result<Self> {
        check_len("factors", shape.parties(), factors.len())?;
        for (i, (f, &d)) in factors.iter().zip(shape.dims()).enumerate() {
            check_len("factor", d, f.len())?;
            let norm = vec_norm(f);
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotNormalized {
                    what: format!("factor {i}"),
                    norm,
                });
            }
        }
        Ok(Self { shape, factors })
    }

    /// Normalizes every factor before validating.
    pub fn normalized(shape: SpaceShape, mut factors: Vec<Vec<C64>>) -> Result<Self> {
        for (i, f) in factors.iter_mut().enumerate() {
            let norm = vec_norm(f);
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::NotNormalized {
                    what: format!("factor {i}"),
                    norm,
                });
            }
            f.iter_mut().for_each(|a| *a /= norm);
        }
        Self::new(shape, factors)
    }

    /// Computational basis product state `|a_1⟩ ⊗ ... ⊗ |a_m⟩`.
    pub fn basis(shape: SpaceShape, digits: &[usize]) -> Result<Self> {
        check_len("digits", shape.parties(), digits.len())?;
        let mut factors = Vec::with_capacity(digits.len());
        for (&a, &d) in digits.iter().zip(shape.dims()) {
            if a >= d {
                return Err(Error::InvalidParameter(format!(
                    "basis digit {a} out of range for dimension {d}"
                )));
            }
            let mut f = vec![ZERO; d];
            f[a] = ONE;
            factors.push(f);
        }
        Ok(Self { shape, factors })
    }

    /// Builds without validation; callers guarantee unit-norm factors.
    pub(crate) fn from_parts_unchecked(shape: SpaceShape, factors: Vec<Vec<C64>>) -> Self {
        Self { shape, factors }
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn factors(&self) -> &[Vec<C64>] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &[C64] {
        &self.factors[i]
    }

    /// The full tensor `⊗ φ_i` as an `n`-vector.
    pub fn to_vector(&self) -> Vec<C64> {
        kron_vectors(self.factors.iter().map(Vec::as_slice))
    }
}

/// A Hermitian, positive semidefinite, trace-one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    shape: SpaceShape,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(shape: SpaceShape, entries: DMatrix<C64>) -> Result<Self> {
        let n = shape.total_dim();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::LengthMismatch {
                what: "density matrix entries",
                expected: n * n,
                got: entries.nrows() * entries.ncols(),
            });
        }
        let mut herm_dev = 0.0f64;
        for r in 0..n {
            for c in r..n {
                herm_dev = herm_dev.max((entries[(r, c)] - entries[(c, r)].conj()).norm());
            }
        }
        if herm_dev > DENSITY_TOL || !herm_dev.is_finite() {
            return Err(Error::NotHermitian(herm_dev));
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(Error::BadTrace(trace.re));
        }
        let min_eig = hermitian_eigen(&entries)
            .0
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { shape, entries })
    }

    /// Row-major entries, `n²` values.
    pub fn from_row_major(shape: SpaceShape, data: &[C64]) -> Result<Self> {
        let n = shape.total_dim();
        check_len("density matrix entries", n * n, data.len())?;
        Self::new(shape, DMatrix::from_row_slice(n, n, data))
    }

    pub(crate) fn from_parts_unchecked(shape: SpaceShape, entries: DMatrix<C64>) -> Self {
        Self { shape, entries }
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        (0..n * n)
            .map(|idx| self.entries[(idx / n, idx % n)])
            .collect()
    }

    /// Eigenvalues in ascending order with matching orthonormal eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<C64>>) {
        hermitian_eigen(&self.entries)
    }

    /// `ϱ|v⟩`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        mat_vec(&self.entries, v)
    }
}

/// Weights `p_k` on product states; stands for `Σ p_k |Φ_k⟩⟨Φ_k|`.
///
/// Weights may be exactly zero. Nothing divides by them.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableEnsemble {
    shape: SpaceShape,
    weights: Vec<f64>,
    states: Vec<ProductState>,
}

impl SeparableEnsemble {
    pub fn new(shape: SpaceShape, weights: Vec<f64>, states: Vec<ProductState>) -> Result<Self> {
        check_len("ensemble states", weights.len(), states.len())?;
        if weights.is_empty() {
            return Err(Error::InvalidWeights("ensemble has no terms".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("weight {w} is negative")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        for s in &states {
            shape.ensure_same(s.shape())?;
        }
        Ok(Self {
            shape,
            weights,
            states,
        })
    }

    pub(crate) fn from_parts_unchecked(
        shape: SpaceShape,
        weights: Vec<f64>,
        states: Vec<ProductState>,
    ) -> Self {
        Self {
            shape,
            weights,
            states,
        }
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of terms with weight above `tol`.
    pub fn active_terms(&self, tol: f64) -> usize {
        self.weights.iter().filter(|&&p| p > tol).count()
    }
}

/// Ensemble data without normalization guarantees: factors need not be unit
/// vectors and weights need not sum to one. Used for candidate points read
/// from outside and for derivative checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEnsemble {
    pub shape: SpaceShape,
    pub weights: Vec<f64>,
    /// `factors[k][i]` is factor `i` of term `k`.
    pub factors: Vec<Vec<Vec<C64>>>,
}

impl RawEnsemble {
    pub fn check_lengths(&self) -> Result<()> {
        check_len("ensemble factors", self.weights.len(), self.factors.len())?;
        for term in &self.factors {
            check_len("factors", self.shape.parties(), term.len())?;
            for (f, &d) in term.iter().zip(self.shape.dims()) {
                check_len("factor", d, f.len())?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Normalizes every factor and rescales the weights to sum to one.
    pub fn normalized(&self) -> Result<SeparableEnsemble> {
        self.check_lengths()?;
        if let Some(w) = self
            .weights
            .iter()
            .find(|w| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidWeights(format!("weight {w} is negative")));
        }
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        let states = self
            .factors
            .iter()
            .map(|f| ProductState::normalized(self.shape.clone(), f.clone()))
            .collect::<Result<Vec<_>>>()?;
        let weights = self.weights.iter().map(|w| w / sum).collect();
        SeparableEnsemble::new(self.shape.clone(), weights, states)
    }
}

impl From<&SeparableEnsemble> for RawEnsemble {
    fn from(e: &SeparableEnsemble) -> Self {
        Self {
            shape: e.shape.clone(),
            weights: e.weights.clone(),
            factors: e.states.iter().map(|s| s.factors.clone()).collect(),
        }
    }
}

/// `Π_i ⟨a_i|b_i⟩`.
pub fn product_overlap(a: &ProductState, b: &ProductState) -> Result<C64> {
    a.shape.ensure_same(&b.shape)?;
    Ok(a.factors
        .iter()
        .zip(&b.factors)
        .map(|(x, y)| inner(x, y))
        .product())
}

/// Materializes `Σ p_k |Φ_k⟩⟨Φ_k|`.
pub fn ensemble_to_density(e: &SeparableEnsemble) -> DensityMatrix {
    let n = e.shape.total_dim();
    let mut entries = DMatrix::from_element(n, n, ZERO);
    for (&p, s) in e.weights.iter().zip(&e.states) {
        if p == 0.0 {
            continue;
        }
        let v = s.to_vector();
        for c in 0..n {
            let vc = v[c].conj() * p;
            for r in 0..n {
                entries[(r, c)] += v[r] * vc;
            }
        }
    }
    // Exact Hermiticity; the diagonal is real up to rounding.
    for r in 0..n {
        entries[(r, r)].im = 0.0;
        for c in r + 1..n {
            entries[(c, r)] = entries[(r, c)].conj();
        }
    }
    DensityMatrix::from_parts_unchecked(e.shape.clone(), entries)
}

/// `Σ_{r,s} p_r p_s |⟨Φ_r|Φ_s⟩|²` via per-pair Gram products; equals the
/// squared Frobenius norm of the ensemble's density matrix.
pub fn ensemble_norm_squared(e: &SeparableEnsemble) -> f64 {
    let mut total = 0.0;
    for (r, (pr, a)) in e.weights.iter().zip(&e.states).enumerate() {
        if *pr == 0.0 {
            continue;
        }
        total += pr * pr;
        for (ps, b) in e.weights.iter().zip(&e.states).skip(r + 1) {
            if *ps == 0.0 {
                continue;
            }
            let g: f64 = a
                .factors
                .iter()
                .zip(&b.factors)
                .map(|(x, y)| inner(x, y).norm_sqr())
                .product();
            total += 2.0 * pr * ps * g;
        }
    }
    total
}

/// `Σ |ϱ_ij|²`.
pub fn frobenius_norm_squared(d: &DensityMatrix) -> f64 {
    d.entries.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨Φ|ϱ|Φ⟩`.
pub fn expectation(d: &DensityMatrix, s: &ProductState) -> Result<f64> {
    Ok(expectation_complex(d, s)?.re)
}

pub(crate) fn expectation_complex(d: &DensityMatrix, s: &ProductState) -> Result<C64> {
    d.shape.ensure_same(&s.shape)?;
    let v = s.to_vector();
    Ok(inner(&v, &d.apply(&v)))
}

/// `(⊗U_k) ϱ (⊗U_k)†`.
pub fn apply_local_unitaries(d: &DensityMatrix, us: &[DMatrix<C64>]) -> Result<DensityMatrix> {
    check_len("local unitaries", d.shape.parties(), us.len())?;
    for (k, (u, &dk)) in us.iter().zip(d.shape.dims()).enumerate() {
        if u.nrows() != dk || u.ncols() != dk {
            return Err(Error::InvalidParameter(format!(
                "unitary {k} is {}x{}, expected {dk}x{dk}",
                u.nrows(),
                u.ncols()
            )));
        }
        let deviation = unitary_deviation(u);
        if deviation > DENSITY_TOL {
            return Err(Error::NotUnitary {
                subsystem: k,
                deviation,
            });
        }
    }
    let full = us
        .iter()
        .skip(1)
        .fold(us[0].clone(), |acc, u| acc.kronecker(u));
    let mut out = &full * d.entries() * full.adjoint();
    let n = out.nrows();
    for r in 0..n {
        out[(r, r)].im = 0.0;
        for c in r + 1..n {
            out[(c, r)] = out[(r, c)].conj();
        }
    }
    DensityMatrix::new(d.shape.clone(), out)
}

/// Max-entry deviation of `U†U` from the identity.
pub fn unitary_deviation(u: &DMatrix<C64>) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let mut dev = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { ONE } else { ZERO };
            dev = dev.max((g[(r, c)] - target).norm());
        }
    }
    dev
}

/// `⟨x|y⟩`, conjugate-linear in the first argument.
#[inline]
pub(crate) fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn kron_vectors<'a>(factors: impl IntoIterator<Item = &'a [C64]>) -> Vec<C64> {
    let mut out = vec![ONE];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for a in &out {
            next.extend(f.iter().map(|b| a * b));
        }
        out = next;
    }
    out
}

pub(crate) fn mat_vec(m: &DMatrix<C64>, v: &[C64]) -> Vec<C64> {
    let n = m.nrows();
    let mut out = vec![ZERO; n];
    for (c, vc) in v.iter().enumerate() {
        for (r, o) in out.iter_mut().enumerate() {
            *o += m[(r, c)] * vc;
        }
    }
    out
}

/// Partial contraction `(⊗_{j≠i} ⟨φ_j|) |w⟩`, a vector on subsystem `i`.
///
/// `factors` yields the factor for subsystem `j` (the entry at `i` is ignored).
pub(crate) fn contract_except(
    shape: &SpaceShape,
    w: &[C64],
    factors: &[&[C64]],
    i: usize,
) -> Vec<C64> {
    let dims = shape.dims();
    let m = dims.len();
    let mut out = vec![ZERO; dims[i]];
    let mut digits = vec![0usize; m];
    for wv in w {
        let mut coeff = *wv;
        for j in 0..m {
            if j != i {
                coeff *= factors[j][digits[j]].conj();
            }
        }
        out[digits[i]] += coeff;
        // odometer increment, last subsystem fastest
        for j in (0..m).rev() {
            digits[j] += 1;
            if digits[j] < dims[j] {
                break;
            }
            digits[j] = 0;
        }
    }
    out
}

pub(crate) fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, Vec<Vec<C64>>) {
    let n = m.nrows();
    // symmetrize so rounding noise cannot leak into the decomposition
    let sym = DMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * 0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}
