//! Solver settings from flags, an optional JSON config file and defaults,
//! in that order of precedence.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use geomeasure::mixed::SolverConfig;
use geomeasure::pure::{PureOptions, DEFAULT_MAX_ITERS, DEFAULT_STARTS, DEFAULT_TOL};
use serde::Deserialize;

use crate::error::CliError;

/// Ensemble size: an explicit count or `auto` (`n² + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terms {
    Auto,
    Count(usize),
}

impl FromStr for Terms {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Terms::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
            Ok(n) => Ok(Terms::Count(n)),
        }
    }
}

impl<'de> Deserialize<'de> for Terms {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(0) => Err(serde::de::Error::custom("terms must be positive")),
            Repr::Count(n) => Ok(Terms::Count(n)),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub starts: Option<usize>,
    pub terms: Option<Terms>,
    pub seed: Option<u64>,
    pub feas_tol: Option<f64>,
    pub stat_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub initial_penalty: Option<f64>,
    pub penalty_growth: Option<f64>,
    pub act_tol: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &PathBuf) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Decode(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Number of starts of the multi-start search.
    #[arg(long)]
    pub starts: Option<usize>,

    /// Ensemble size, or `auto` for n²+1.
    #[arg(long)]
    pub terms: Option<Terms>,

    /// Seed of the random starts.
    #[arg(long, env = "GEOMEASURE_SEED")]
    pub seed: Option<u64>,

    /// Tolerance on the norm constraint.
    #[arg(long)]
    pub feas_tol: Option<f64>,

    /// Tolerance on the optimality residual (pure: eigen-residual).
    #[arg(long)]
    pub stat_tol: Option<f64>,

    /// Outer (multiplier update) iteration limit of the mixed solver.
    #[arg(long)]
    pub max_outer: Option<usize>,

    /// Inner iteration limit (pure: iterations per start).
    #[arg(long)]
    pub max_inner: Option<usize>,

    /// JSON file with any of the settings above, overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl SolverArgs {
    fn file(&self) -> Result<ConfigFile, CliError> {
        match &self.config {
            Some(p) => ConfigFile::load(p),
            None => Ok(ConfigFile::default()),
        }
    }

    pub fn mixed(&self) -> Result<SolverConfig, CliError> {
        let f = self.file()?;
        let d = SolverConfig::default();
        let terms = self.terms.or(f.terms).unwrap_or(Terms::Auto);
        let config = SolverConfig {
            starts: self.starts.or(f.starts).unwrap_or(d.starts),
            num_terms: match terms {
                Terms::Auto => None,
                Terms::Count(n) => Some(n),
            },
            seed: self.seed.or(f.seed).unwrap_or(d.seed),
            feas_tol: self.feas_tol.or(f.feas_tol).unwrap_or(d.feas_tol),
            stat_tol: self.stat_tol.or(f.stat_tol).unwrap_or(d.stat_tol),
            max_outer: self.max_outer.or(f.max_outer).unwrap_or(d.max_outer),
            max_inner: self.max_inner.or(f.max_inner).unwrap_or(d.max_inner),
            initial_penalty: f.initial_penalty.unwrap_or(d.initial_penalty),
            penalty_growth: f.penalty_growth.unwrap_or(d.penalty_growth),
            act_tol: f.act_tol.unwrap_or(d.act_tol),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn pure(&self) -> Result<PureOptions, CliError> {
        let f = self.file()?;
        let opts = PureOptions {
            starts: self.starts.or(f.starts).unwrap_or(DEFAULT_STARTS),
            seed: self.seed.or(f.seed).unwrap_or(0),
            max_iters: self.max_inner.or(f.max_inner).unwrap_or(DEFAULT_MAX_ITERS),
            tol: self.stat_tol.or(f.stat_tol).unwrap_or(DEFAULT_TOL),
        };
        if opts.starts == 0 || opts.max_iters == 0 || !(opts.tol > 0.0) {
            return Err(CliError::Usage(
                "starts, iteration limit and tolerance must be positive".into(),
            ));
        }
        Ok(opts)
    }
}

/// Parses `start:end:step` into an inclusive grid; the end point is kept
/// when it lies within 1e-12 of a step.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid must be `start:end:step`, got `{s}`"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(CliError::Usage(format!(
            "grid `{s}` needs a positive step and start <= end"
        )));
    }
    const GRID_TOL: f64 = 1e-12;
    let count = ((end - start) / step + GRID_TOL).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let v = start + k as f64 * step;
            if (v - end).abs() <= GRID_TOL * end.abs().max(1.0) {
                end
            } else {
                v
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = parse_grid("0:1:0.05").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[20], 1.0);
        assert_eq!(parse_grid("0.2:0.3:0.1").unwrap(), vec![0.2, 0.3]);
        assert_eq!(parse_grid("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn terms_parse() {
        assert_eq!("auto".parse::<Terms>().unwrap(), Terms::Auto);
        assert_eq!("7".parse::<Terms>().unwrap(), Terms::Count(7));
        assert!("0".parse::<Terms>().is_err());
        let f: ConfigFile = serde_json::from_str(r#"{"terms":"auto","starts":3}"#).unwrap();
        assert_eq!(f.terms, Some(Terms::Auto));
        let f: ConfigFile = serde_json::from_str(r#"{"terms":4}"#).unwrap();
        assert_eq!(f.terms, Some(Terms::Count(4)));
        assert!(serde_json::from_str::<ConfigFile>(r#"{"bogus":1}"#).is_err());
    }
}
