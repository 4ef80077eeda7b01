//! On-disk documents. Every JSON document carries a `kind` tag; complex
//! numbers are `[re, im]` pairs and matrices are row-major.

use std::fmt::Write as _;

use geomeasure::mixed::{KktMultipliers, MeasureResult, RunSummary};
use geomeasure::pure::PureSolution;
use geomeasure::states::{
    DensityMatrix, ProductState, PureState, RawEnsemble, SeparableEnsemble, SpaceShape, C64,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub type Pair = [f64; 2];

fn to_pair(z: &C64) -> Pair {
    [z.re, z.im]
}

fn from_pair(p: &Pair) -> C64 {
    C64::new(p[0], p[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Pure,
    Density,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub kind: StateKind,
    pub dims: Vec<usize>,
    pub data: Vec<Pair>,
}

/// A decoded state file.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(PureState),
    Density(DensityMatrix),
}

impl State {
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(p) => p.to_density(),
            State::Density(d) => d.clone(),
        }
    }
}

impl StateFile {
    pub fn from_pure(psi: &PureState) -> Self {
        Self {
            kind: StateKind::Pure,
            dims: psi.shape().dims().to_vec(),
            data: psi.amplitudes().iter().map(to_pair).collect(),
        }
    }

    pub fn from_density(rho: &DensityMatrix) -> Self {
        Self {
            kind: StateKind::Density,
            dims: rho.shape().dims().to_vec(),
            data: rho.to_row_major().iter().map(to_pair).collect(),
        }
    }

    pub fn decode(&self) -> Result<State, CliError> {
        let shape = SpaceShape::new(self.dims.clone()).map_err(|e| CliError::field("dims", e))?;
        let n = shape.total_dim();
        let expected = match self.kind {
            StateKind::Pure => n,
            StateKind::Density => n * n,
        };
        if self.data.len() != expected {
            return Err(CliError::Decode(format!(
                "dims mismatch: dims {:?} need {expected} entries in `data`, found {}",
                self.dims,
                self.data.len()
            )));
        }
        let data: Vec<C64> = self.data.iter().map(from_pair).collect();
        match self.kind {
            StateKind::Pure => PureState::new(shape, data)
                .map(State::Pure)
                .map_err(|e| CliError::field("data", e)),
            StateKind::Density => DensityMatrix::from_row_major(shape, &data)
                .map(State::Density)
                .map_err(|e| CliError::field("data", e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDoc {
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
    /// `factors[k][i]` is the factor of term `k` on subsystem `i`.
    pub factors: Vec<Vec<Vec<Pair>>>,
}

impl EnsembleDoc {
    pub fn from_ensemble(e: &SeparableEnsemble) -> Self {
        Self::from_raw(&RawEnsemble::from(e))
    }

    pub fn from_raw(e: &RawEnsemble) -> Self {
        Self {
            dims: e.shape.dims().to_vec(),
            weights: e.weights.clone(),
            factors: e
                .factors
                .iter()
                .map(|t| t.iter().map(|f| f.iter().map(to_pair).collect()).collect())
                .collect(),
        }
    }

    /// The ensemble as written, without normalization checks.
    pub fn to_raw(&self) -> Result<RawEnsemble, CliError> {
        let shape = SpaceShape::new(self.dims.clone()).map_err(|e| CliError::field("dims", e))?;
        let raw = RawEnsemble {
            shape,
            weights: self.weights.clone(),
            factors: self
                .factors
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|f| f.iter().map(from_pair).collect())
                        .collect()
                })
                .collect(),
        };
        raw.check_lengths()
            .map_err(|e| CliError::field("factors", e))?;
        Ok(raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipliersDoc {
    pub lambda: f64,
    pub kappa: f64,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
}

impl From<&KktMultipliers> for MultipliersDoc {
    fn from(m: &KktMultipliers) -> Self {
        Self {
            lambda: m.lambda,
            kappa: m.kappa,
            mu: m.mu.clone(),
            tau: m.tau.clone(),
        }
    }
}

impl From<&MultipliersDoc> for KktMultipliers {
    fn from(m: &MultipliersDoc) -> Self {
        Self {
            lambda: m.lambda,
            kappa: m.kappa,
            mu: m.mu.clone(),
            tau: m.tau.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedRunDoc {
    pub start: usize,
    pub chi: f64,
    pub feas_gap: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

impl From<&RunSummary> for MixedRunDoc {
    fn from(r: &RunSummary) -> Self {
        Self {
            start: r.start,
            chi: r.chi,
            feas_gap: r.feas_gap,
            kkt_residual: r.kkt_residual,
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedResultDoc {
    pub dims: Vec<usize>,
    pub chi: f64,
    pub half_e_sq: f64,
    pub e: f64,
    pub norm_sq: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub starts_used: usize,
    pub best_start: usize,
    pub ensemble: EnsembleDoc,
    pub multipliers: MultipliersDoc,
    pub runs: Vec<MixedRunDoc>,
}

impl From<&MeasureResult> for MixedResultDoc {
    fn from(r: &MeasureResult) -> Self {
        Self {
            dims: r.ensemble.shape().dims().to_vec(),
            chi: r.chi,
            half_e_sq: r.measure_sq_half,
            e: r.measure(),
            norm_sq: r.norm_sq_target,
            kkt_residual: r.kkt_residual,
            converged: r.converged,
            starts_used: r.starts_used,
            best_start: r.best_start,
            ensemble: EnsembleDoc::from_ensemble(&r.ensemble),
            multipliers: MultipliersDoc::from(&r.multipliers),
            runs: r.runs.iter().map(MixedRunDoc::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PureRunDoc {
    pub start: usize,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PureResultDoc {
    pub dims: Vec<usize>,
    pub lambda_max: f64,
    pub measure: f64,
    pub residual: f64,
    pub converged: bool,
    pub best_start: usize,
    /// Factors of the nearest product state.
    pub factors: Vec<Vec<Pair>>,
    pub runs: Vec<PureRunDoc>,
}

impl From<&PureSolution> for PureResultDoc {
    fn from(s: &PureSolution) -> Self {
        Self {
            dims: s.best.state.shape().dims().to_vec(),
            lambda_max: s.lambda_max(),
            measure: s.measure(),
            residual: s.best.residual,
            converged: s.converged,
            best_start: s.best_start,
            factors: factors_doc(&s.best.state),
            runs: s
                .runs
                .iter()
                .map(|r| PureRunDoc {
                    start: r.start,
                    lambda: r.lambda,
                    residual: r.residual,
                    iterations: r.iterations,
                    converged: r.converged,
                })
                .collect(),
        }
    }
}

fn factors_doc(s: &ProductState) -> Vec<Vec<Pair>> {
    s.factors()
        .iter()
        .map(|f| f.iter().map(to_pair).collect())
        .collect()
}

/// One row of a sweep in structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRowDoc {
    pub alpha: f64,
    pub chi: Option<f64>,
    pub half_e_sq: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Residual blocks written by `kkt-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KktReportDoc {
    pub stationarity: f64,
    /// `[term, subsystem]` where stationarity is worst, 0-based.
    pub worst_factor: [usize; 2],
    pub scalar: f64,
    pub complementarity: f64,
    pub feasibility: f64,
    pub mu_sum_gap: f64,
    pub max: f64,
    pub stat_tol: f64,
    pub passed: bool,
    /// The block that exceeds `stat_tol` by the most, if any.
    pub violated: Option<String>,
    pub multipliers: MultipliersDoc,
}

/// Every structured document the tool reads or writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Document {
    Ensemble(EnsembleDoc),
    Multipliers(MultipliersDoc),
    MixedResult(MixedResultDoc),
    PureResult(PureResultDoc),
    Sweep { rows: Vec<SweepRowDoc> },
    KktReport(KktReportDoc),
}

/// Pretty JSON with full `f64` precision, newline-terminated.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn parse_state(text: &str) -> Result<State, CliError> {
    let file: StateFile = serde_json::from_str(text).map_err(CliError::json)?;
    file.decode()
}

pub fn parse_document(text: &str) -> Result<Document, CliError> {
    serde_json::from_str(text).map_err(CliError::json)
}

/// An ensemble read from disk, possibly with multipliers stored alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEnsemble {
    pub raw: RawEnsemble,
    pub multipliers: Option<KktMultipliers>,
}

/// Reads an ensemble from a JSON `ensemble` or `mixed_result` document, or
/// from whitespace-separated table text (see [`parse_table`]).
pub fn parse_ensemble(text: &str, dims: &[usize]) -> Result<LoadedEnsemble, CliError> {
    if text.trim_start().starts_with('{') {
        match parse_document(text)? {
            Document::Ensemble(e) => Ok(LoadedEnsemble {
                raw: e.to_raw()?,
                multipliers: None,
            }),
            Document::MixedResult(r) => Ok(LoadedEnsemble {
                raw: r.ensemble.to_raw()?,
                multipliers: Some(KktMultipliers::from(&r.multipliers)),
            }),
            _ => Err(CliError::Decode(
                "expected a document of kind `ensemble` or `mixed_result`".into(),
            )),
        }
    } else {
        let shape = SpaceShape::new(dims.to_vec()).map_err(|e| CliError::field("dims", e))?;
        Ok(LoadedEnsemble {
            raw: parse_table(text, &shape)?,
            multipliers: None,
        })
    }
}

pub fn parse_multipliers(text: &str) -> Result<KktMultipliers, CliError> {
    match parse_document(text)? {
        Document::Multipliers(m) => Ok(KktMultipliers::from(&m)),
        Document::MixedResult(r) => Ok(KktMultipliers::from(&r.multipliers)),
        _ => Err(CliError::Decode(
            "expected a document of kind `multipliers` or `mixed_result`".into(),
        )),
    }
}

/// Reads ensemble rows laid out as
///
/// ```text
/// p  x(1)_1 .. x(1)_d1  x(2)_1 ..  ...  y(1)_1 .. y(1)_d1  y(2)_1 ..  ...
/// ```
///
/// where factor `i` has components `x(i)_a + i·y(i)_a`: the weight, then the
/// real parts of all factors in subsystem order, then the imaginary parts.
/// Separators may be whitespace, commas or `&`; a leading row index column,
/// blank lines, `#` comments and non-numeric header lines are skipped. Values
/// are kept as printed; use [`RawEnsemble::normalized`] to renormalize.
pub fn parse_table(text: &str, shape: &SpaceShape) -> Result<RawEnsemble, CliError> {
    let width = shape.local_dim_sum();
    let cols = 1 + 2 * width;
    let mut weights = Vec::new();
    let mut factors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let line = line
            .trim_end_matches("\\\\")
            .trim_end_matches("\\hline")
            .trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',' || c == '&')
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        let Ok(mut values) = parsed else {
            if weights.is_empty() {
                continue; // header
            }
            return Err(CliError::Decode(format!(
                "line {}: non-numeric entry in ensemble table",
                lineno + 1
            )));
        };
        if values.len() == cols + 1 {
            values.remove(0);
        }
        if values.len() != cols {
            return Err(CliError::Decode(format!(
                "line {}: expected {cols} columns for dims {:?}, found {}",
                lineno + 1,
                shape.dims(),
                values.len()
            )));
        }
        weights.push(values[0]);
        let (re, im) = values[1..].split_at(width);
        let mut term = Vec::with_capacity(shape.parties());
        let mut off = 0;
        for &d in shape.dims() {
            term.push((off..off + d).map(|a| C64::new(re[a], im[a])).collect());
            off += d;
        }
        factors.push(term);
    }
    if weights.is_empty() {
        return Err(CliError::Decode("ensemble table has no rows".into()));
    }
    Ok(RawEnsemble {
        shape: shape.clone(),
        weights,
        factors,
    })
}

/// Column headers for [`ensemble_table`]: `p`, `x{i}{a}`, `y{i}{a}`.
fn table_headers(shape: &SpaceShape) -> Vec<String> {
    let mut h = vec!["k".to_string(), "p".to_string()];
    for part in ["x", "y"] {
        for (i, &d) in shape.dims().iter().enumerate() {
            for a in 0..d {
                h.push(format!("{part}{}{}", i + 1, a + 1));
            }
        }
    }
    h
}

/// Terms with nonzero weight in the row layout read by [`parse_table`].
pub fn ensemble_table(e: &SeparableEnsemble) -> String {
    let mut rows = vec![table_headers(e.shape())];
    for (k, (p, s)) in e.weights().iter().zip(e.states()).enumerate() {
        if *p == 0.0 {
            continue;
        }
        let mut row = vec![(k + 1).to_string(), sig9(*p)];
        row.extend(s.factors().iter().flatten().map(|z| sig9(z.re)));
        row.extend(s.factors().iter().flatten().map(|z| sig9(z.im)));
        rows.push(row);
    }
    align(&rows)
}

/// Left-aligned columns separated by two spaces.
pub fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// `x` to 9 significant digits, in the style of C's `%.9g`.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
