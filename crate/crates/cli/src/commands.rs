//! Subcommand implementations. Each returns the rendered output and the exit
//! code; writing is left to the caller.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use geomeasure::examples::{self, Family, SweepRow, CASE_I, CASE_II};
use geomeasure::mixed::{
    kkt_report_raw, recover_multipliers_with, solve, KktMultipliers, KktReport, MeasureResult,
    MixedProblem, MultiplierFit, DEFAULT_ACT_TOL,
};
use geomeasure::pure::{entanglement_eigenvalue_pure_with, PureSolution};

use crate::config::{parse_grid, SolverArgs};
use crate::error::{exit, CliError};
use crate::format::{
    align, ensemble_table, parse_ensemble, parse_multipliers, parse_state, sig9, to_json, Document,
    KktReportDoc, MixedResultDoc, MultipliersDoc, PureResultDoc, State, SweepRowDoc,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned text for reading.
    Table,
    /// JSON document that other subcommands can read back.
    Structured,
    /// Comma-separated rows.
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output format [default: table; csv for sweep].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct PureArgs {
    /// State file of kind `pure`.
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MixedArgs {
    /// State file of kind `density` (a `pure` file is converted).
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Example1,
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseName {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,

    /// Amplitude case of `example2`.
    #[arg(long, value_enum, default_value = "I")]
    pub case: CaseName,

    /// Explicit `γ1,γ2,γ3,γ4` for `example2`, overriding `--case`.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub gamma: Option<Vec<f64>>,

    /// `start:end:step`, both ends included.
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: String,

    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct KktArgs {
    /// State file of the target.
    pub state: PathBuf,

    /// Ensemble as an `ensemble` or `mixed_result` document, or as a table.
    pub ensemble: PathBuf,

    /// Multipliers document; recovered from the ensemble when absent.
    #[arg(long)]
    pub multipliers: Option<PathBuf>,

    /// Renormalize weights and factors before checking.
    #[arg(long)]
    pub normalize: bool,

    /// Largest residual accepted.
    #[arg(long, default_value_t = geomeasure::mixed::SolverConfig::default().stat_tol)]
    pub stat_tol: f64,

    /// Weights above this count as active when recovering multipliers.
    #[arg(long, default_value_t = DEFAULT_ACT_TOL)]
    pub act_tol: f64,

    #[command(flatten)]
    pub output: OutputArgs,
}

/// Rendered output plus the exit code to report.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub body: String,
    pub code: i32,
    /// One-line diagnostics for stderr.
    pub notes: Vec<String>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn no_csv(cmd: &str) -> CliError {
    CliError::Usage(format!("`{cmd}` supports --format table or structured"))
}

fn kv(rows: &[(&str, String)]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(k, v)| vec![k.to_string(), v.clone()])
        .collect();
    align(&rows)
}

pub fn pure(args: &PureArgs) -> Result<Report, CliError> {
    let psi = match parse_state(&read(&args.input)?)? {
        State::Pure(p) => p,
        State::Density(_) => {
            return Err(CliError::Decode(
                "field `kind`: expected `pure`, found `density`".into(),
            ))
        }
    };
    let opts = args.solver.pure()?;
    let sol = entanglement_eigenvalue_pure_with(&psi, &opts)?;
    let body = match args.output.format.unwrap_or(Format::Table) {
        Format::Structured => to_json(&Document::PureResult(PureResultDoc::from(&sol))),
        Format::Table => pure_table(&sol),
        Format::Csv => return Err(no_csv("pure")),
    };
    let mut notes = Vec::new();
    let code = if sol.converged {
        exit::OK
    } else {
        notes.push(format!(
            "no start reached residual {} within {} iterations",
            sig9(opts.tol),
            opts.max_iters
        ));
        exit::UNCONVERGED
    };
    Ok(Report { body, code, notes })
}

fn pure_table(sol: &PureSolution) -> String {
    let mut out = kv(&[
        ("lambda_max", sig9(sol.lambda_max())),
        ("measure", sig9(sol.measure())),
        ("residual", sig9(sol.best.residual)),
        ("converged", sol.converged.to_string()),
        ("best_start", sol.best_start.to_string()),
    ]);
    out.push_str("\nnearest product state\n");
    let mut rows = vec![vec![
        "subsystem".into(),
        "a".into(),
        "re".into(),
        "im".into(),
    ]];
    for (i, f) in sol.best.state.factors().iter().enumerate() {
        for (a, z) in f.iter().enumerate() {
            rows.push(vec![
                (i + 1).to_string(),
                (a + 1).to_string(),
                sig9(z.re),
                sig9(z.im),
            ]);
        }
    }
    out.push_str(&align(&rows));
    out.push_str("\nruns\n");
    let mut rows = vec![["start", "lambda", "residual", "iterations", "converged"]
        .map(String::from)
        .to_vec()];
    for r in &sol.runs {
        rows.push(vec![
            r.start.to_string(),
            sig9(r.lambda),
            sig9(r.residual),
            r.iterations.to_string(),
            r.converged.to_string(),
        ]);
    }
    out.push_str(&align(&rows));
    out
}

pub fn mixed(args: &MixedArgs) -> Result<Report, CliError> {
    let rho = parse_state(&read(&args.input)?)?.to_density();
    let config = args.solver.mixed()?;
    let problem = MixedProblem::from_config(rho, &config)?;
    let result = solve(&problem, &config)?;
    let body = match args.output.format.unwrap_or(Format::Table) {
        Format::Structured => to_json(&Document::MixedResult(MixedResultDoc::from(&result))),
        Format::Table => mixed_table(&result),
        Format::Csv => ensemble_table(&result.ensemble)
            .lines()
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(",") + "\n")
            .collect(),
    };
    let mut notes = Vec::new();
    let code = if result.converged {
        exit::OK
    } else {
        notes.push(format!(
            "not converged: kkt residual {} exceeds {}",
            sig9(result.kkt_residual),
            sig9(config.stat_tol)
        ));
        exit::UNCONVERGED
    };
    Ok(Report { body, code, notes })
}

fn mixed_table(r: &MeasureResult) -> String {
    let mut out = kv(&[
        ("chi", sig9(r.chi)),
        ("half_E_sq", sig9(r.measure_sq_half)),
        ("E", sig9(r.measure())),
        ("norm_sq", sig9(r.norm_sq_target)),
        ("kkt_residual", sig9(r.kkt_residual)),
        ("converged", r.converged.to_string()),
        ("starts_used", r.starts_used.to_string()),
        ("best_start", r.best_start.to_string()),
    ]);
    out.push_str("\nensemble\n");
    out.push_str(&ensemble_table(&r.ensemble));
    out.push_str("\nmultipliers\n");
    out.push_str(&multipliers_table(&r.multipliers));
    out.push_str("\nruns\n");
    let mut rows = vec![[
        "start",
        "chi",
        "feas_gap",
        "kkt_residual",
        "outer",
        "inner",
        "converged",
    ]
    .map(String::from)
    .to_vec()];
    for s in &r.runs {
        rows.push(vec![
            s.start.to_string(),
            sig9(s.chi),
            sig9(s.feas_gap),
            sig9(s.kkt_residual),
            s.outer_iterations.to_string(),
            s.inner_iterations.to_string(),
            s.converged.to_string(),
        ]);
    }
    out.push_str(&align(&rows));
    out
}

fn multipliers_table(m: &KktMultipliers) -> String {
    let mut out = kv(&[("lambda", sig9(m.lambda)), ("kappa", sig9(m.kappa))]);
    let mut rows = vec![vec!["k".into(), "mu".into(), "tau".into()]];
    for (k, (mu, tau)) in m.mu.iter().zip(&m.tau).enumerate() {
        rows.push(vec![(k + 1).to_string(), sig9(*mu), sig9(*tau)]);
    }
    out.push_str(&align(&rows));
    out
}

fn family(args: &SweepArgs) -> Result<Family, CliError> {
    match args.family {
        FamilyName::Example1 => {
            if args.gamma.is_some() {
                return Err(CliError::Usage("--gamma applies to example2 only".into()));
            }
            Ok(Family::Example1)
        }
        FamilyName::Example2 => {
            let gamma = match &args.gamma {
                Some(g) => [g[0], g[1], g[2], g[3]],
                None => match args.case {
                    CaseName::I => CASE_I,
                    CaseName::II => CASE_II,
                },
            };
            // validates γ
            examples::example2(examples::Example2Params::new(0.5, gamma)?)?;
            Ok(Family::Example2 { gamma })
        }
    }
}

pub const SWEEP_HEADER: &str = "alpha,chi,half_E_sq,kkt_residual,converged";

pub fn sweep(args: &SweepArgs) -> Result<Report, CliError> {
    let family = family(args)?;
    let grid = parse_grid(&args.grid)?;
    let config = args.solver.mixed()?;
    let rows = examples::sweep(family, &grid, &config);

    let body = match args.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from(SWEEP_HEADER);
            s.push('\n');
            for r in &rows {
                s.push_str(
                    &[
                        sig9(r.alpha),
                        sig9(r.chi),
                        sig9(r.measure_sq_half),
                        sig9(r.kkt_residual),
                        r.converged.to_string(),
                    ]
                    .join(","),
                );
                s.push('\n');
            }
            s
        }
        Format::Table => {
            let mut t = vec![SWEEP_HEADER
                .split(',')
                .map(String::from)
                .collect::<Vec<_>>()];
            t.extend(rows.iter().map(|r| {
                vec![
                    sig9(r.alpha),
                    sig9(r.chi),
                    sig9(r.measure_sq_half),
                    sig9(r.kkt_residual),
                    r.converged.to_string(),
                ]
            }));
            align(&t)
        }
        Format::Structured => to_json(&Document::Sweep {
            rows: rows.iter().map(sweep_row_doc).collect(),
        }),
    };

    let notes: Vec<String> = rows
        .iter()
        .filter_map(|r| match &r.error {
            Some(e) => Some(format!("alpha {}: {e}", sig9(r.alpha))),
            None if !r.converged => Some(format!(
                "alpha {}: not converged (kkt residual {})",
                sig9(r.alpha),
                sig9(r.kkt_residual)
            )),
            None => None,
        })
        .collect();
    let code = if rows.iter().all(|r| r.error.is_some() || !r.converged) {
        exit::UNCONVERGED
    } else {
        exit::OK
    };
    Ok(Report { body, code, notes })
}

fn sweep_row_doc(r: &SweepRow) -> SweepRowDoc {
    let ok = r.error.is_none();
    SweepRowDoc {
        alpha: r.alpha,
        chi: ok.then_some(r.chi),
        half_e_sq: ok.then_some(r.measure_sq_half),
        kkt_residual: ok.then_some(r.kkt_residual),
        converged: r.converged,
        error: r.error.as_ref().map(ToString::to_string),
    }
}

/// Residual blocks in reporting order.
fn blocks(r: &KktReport) -> [(&'static str, f64); 4] {
    [
        ("stationarity", r.stationarity),
        ("scalar", r.scalar),
        ("complementarity", r.complementarity),
        ("feasibility", r.feasibility),
    ]
}

pub fn kkt_check(args: &KktArgs) -> Result<Report, CliError> {
    if !(args.stat_tol > 0.0) || !(args.act_tol > 0.0) {
        return Err(CliError::Usage("tolerances must be positive".into()));
    }
    let rho = parse_state(&read(&args.state)?)?.to_density();
    let loaded = parse_ensemble(&read(&args.ensemble)?, rho.shape().dims())?;
    rho.shape().ensure_same(&loaded.raw.shape)?;
    let raw = if args.normalize {
        (&loaded.raw.normalized()?).into()
    } else {
        loaded.raw
    };
    let mult = match (&args.multipliers, loaded.multipliers) {
        (Some(path), _) => parse_multipliers(&read(path)?)?,
        (None, Some(m)) => m,
        (None, None) => {
            recover_multipliers_with(&rho, &raw, MultiplierFit::FullSystem, args.act_tol)?
        }
    };
    let report = kkt_report_raw(&rho, &raw, &mult)?;
    let max = report.max();
    // an infeasible ensemble is reported as such; otherwise the worst block
    let violated = if !(report.feasibility <= args.stat_tol) {
        Some("feasibility")
    } else {
        blocks(&report)
            .into_iter()
            .filter(|(_, v)| !(*v <= args.stat_tol))
            .fold(None, |acc: Option<(&str, f64)>, b| match acc {
                Some(a) if a.1 >= b.1 => Some(a),
                _ => Some(b),
            })
            .map(|(name, _)| name)
    };
    let passed = violated.is_none();

    let body = match args.output.format.unwrap_or(Format::Table) {
        Format::Structured => to_json(&Document::KktReport(KktReportDoc {
            stationarity: report.stationarity,
            worst_factor: [report.worst_factor.0, report.worst_factor.1],
            scalar: report.scalar,
            complementarity: report.complementarity,
            feasibility: report.feasibility,
            mu_sum_gap: report.mu_sum_gap,
            max,
            stat_tol: args.stat_tol,
            passed,
            violated: violated.map(String::from),
            multipliers: MultipliersDoc::from(&mult),
        })),
        Format::Table => {
            let mut rows: Vec<(&str, String)> = blocks(&report)
                .into_iter()
                .map(|(n, v)| (n, sig9(v)))
                .collect();
            rows.push(("mu_sum_gap", sig9(report.mu_sum_gap)));
            rows.push(("max", sig9(max)));
            rows.push(("stat_tol", sig9(args.stat_tol)));
            rows.push((
                "worst_factor",
                format!(
                    "term {} subsystem {}",
                    report.worst_factor.0 + 1,
                    report.worst_factor.1 + 1
                ),
            ));
            rows.push(("passed", passed.to_string()));
            let mut out = kv(&rows);
            out.push_str("\nmultipliers\n");
            out.push_str(&multipliers_table(&mult));
            out
        }
        Format::Csv => return Err(no_csv("kkt-check")),
    };
    let (code, notes) = match violated {
        None => (exit::OK, Vec::new()),
        Some(name) => {
            let code = if name == "feasibility" {
                exit::INFEASIBLE
            } else {
                exit::KKT_FAILED
            };
            let value = blocks(&report)
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| v)
                .unwrap_or(max);
            (
                code,
                vec![format!(
                    "violated block: {name} ({} > {})",
                    sig9(value),
                    sig9(args.stat_tol)
                )],
            )
        }
    };
    Ok(Report { body, code, notes })
}
