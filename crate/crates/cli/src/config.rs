//! The analysis configuration file.
//!
//! ```toml
//! input = "cohort.csv"        # relative paths resolve against this file
//! outcome = "y"
//! censored = "lost"           # optional, 1 marks a censored subject
//! estimator = "ce-dwols"
//! seed = 7
//! format = "csv"              # or "table"
//! output = "estimates.csv"    # optional, stdout otherwise
//!
//! [censoring]                 # optional
//! terms = ["1", "x2", "a"]
//! truncation_quantile = 0.999
//!
//! [bootstrap]                 # optional
//! mode = "plain"              # or "adaptive"
//! b1 = 500
//! b2 = 500
//! ci_level = 0.95
//!
//! [[stage]]
//! treatment = "a"
//! covariates = ["x1", "x2"]
//! tailoring = ["x1"]
//! # treatment_terms, treatment_free_terms, blip_terms: default to an
//! # intercept plus every history column; tailoring_terms: intercept plus
//! # the tailoring columns. Terms are `1`, `x` or `x:z`.
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use pats::estimators::CensoringSpec;
use pats::inference::{BootstrapConfig, BootstrapMode};
use pats::{EstimatorKind, StageSpec, TermList};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Plain,
    Adaptive,
}

impl From<ModeName> for BootstrapMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Plain => BootstrapMode::Plain,
            ModeName::Adaptive => BootstrapMode::AdaptiveMn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub treatment: String,
    /// Columns measured at this stage, before its treatment.
    #[serde(default)]
    pub covariates: Vec<String>,
    pub tailoring: Vec<String>,
    pub treatment_terms: Option<Vec<String>>,
    pub treatment_free_terms: Option<Vec<String>>,
    pub blip_terms: Option<Vec<String>>,
    pub tailoring_terms: Option<Vec<String>>,
    pub tailoring_treatment_terms: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensoringConfig {
    #[serde(default = "intercept_only")]
    pub terms: Vec<String>,
    #[serde(default = "default_truncation")]
    pub truncation_quantile: f64,
}

fn intercept_only() -> Vec<String> {
    vec!["1".into()]
}

fn default_truncation() -> f64 {
    CensoringSpec::default().truncation_quantile
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    #[serde(default)]
    pub mode: ModeName,
    pub b1: Option<usize>,
    pub b2: Option<usize>,
    pub ci_level: Option<f64>,
    pub alpha_start: Option<f64>,
    pub alpha_step: Option<f64>,
    pub alpha_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub outcome: String,
    pub censored: Option<String>,
    pub estimator: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub censoring: Option<CensoringConfig>,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(rename = "stage")]
    pub stages: Vec<StageConfig>,
}

impl AnalysisConfig {
    /// Reads and checks `path`; `input` and `output` become relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.input = base.join(&cfg.input);
        if let Some(o) = &cfg.output {
            cfg.output = Some(base.join(o));
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: AnalysisConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
        if cfg.stages.is_empty() {
            return Err(CliError::Usage("the configuration needs at least one [[stage]]".into()));
        }
        cfg.kind()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<EstimatorKind, CliError> {
        self.estimator.parse().map_err(|e: pats::Error| CliError::Usage(e.to_string()))
    }

    /// History columns of `stage` (1-based) in order: earlier covariates and
    /// treatments, then this stage's covariates.
    pub fn history(&self, stage: usize) -> Vec<&str> {
        let mut h = Vec::new();
        for (j0, s) in self.stages[..stage].iter().enumerate() {
            h.extend(s.covariates.iter().map(String::as_str));
            if j0 + 1 < stage {
                h.push(s.treatment.as_str());
            }
        }
        h
    }

    /// Every CSV column the analysis reads.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols = vec![self.outcome.as_str()];
        cols.extend(self.censored.as_deref());
        for s in &self.stages {
            cols.extend(s.covariates.iter().map(String::as_str));
            cols.push(&s.treatment);
        }
        cols
    }

    /// Model specification per stage, restricted to the tailoring terms for
    /// the adaptive estimators.
    pub fn specs(&self) -> Result<Vec<StageSpec>, CliError> {
        let kind = self.kind()?;
        let parse = |t: &Option<Vec<String>>, default: &[&str]| -> Result<TermList, CliError> {
            match t {
                Some(list) => Ok(TermList::parse(list)?),
                None => Ok(TermList::intercept_and(default)),
            }
        };
        let mut specs = Vec::with_capacity(self.stages.len());
        for (j0, s) in self.stages.iter().enumerate() {
            let hist = self.history(j0 + 1);
            let tailoring: Vec<&str> = s.tailoring.iter().map(String::as_str).collect();
            let mut spec = StageSpec::new(
                parse(&s.treatment_terms, &hist)?,
                parse(&s.treatment_free_terms, &hist)?,
                parse(&s.blip_terms, &hist)?,
                parse(&s.tailoring_terms, &tailoring)?,
                s.tailoring.clone(),
            );
            if let Some(t) = &s.tailoring_treatment_terms {
                spec.tailoring_treatment = Some(TermList::parse(t)?);
            }
            specs.push(if kind.is_pats() { spec } else { spec.restricted_to_tailoring() });
        }
        Ok(specs)
    }

    pub fn censoring_spec(&self) -> Result<Option<CensoringSpec>, CliError> {
        self.censoring
            .as_ref()
            .map(|c| {
                Ok(CensoringSpec {
                    terms: TermList::parse(&c.terms)?,
                    truncation_quantile: c.truncation_quantile,
                })
            })
            .transpose()
    }

    /// Bootstrap settings with `mode` overriding the file when given.
    pub fn bootstrap_config(&self, mode: Option<ModeName>) -> Result<BootstrapConfig, CliError> {
        let b = &self.bootstrap;
        let d = BootstrapConfig::default();
        let cfg = BootstrapConfig {
            b1: b.b1.unwrap_or(d.b1),
            b2: b.b2.unwrap_or(d.b2),
            alpha_start: b.alpha_start.unwrap_or(d.alpha_start),
            alpha_step: b.alpha_step.unwrap_or(d.alpha_step),
            alpha_max: b.alpha_max.unwrap_or(d.alpha_max),
            ci_level: b.ci_level.unwrap_or(d.ci_level),
            seed: self.seed,
            mode: mode.unwrap_or(b.mode).into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
