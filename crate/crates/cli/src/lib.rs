//! The `pats` command-line tool.
//!
//! `simulate` runs the benchmark scenarios, `analyze` fits an estimator to a
//! CSV file described by an [`config::AnalysisConfig`] and `bootstrap`
//! reports the bootstrap tuning alongside the intervals. Exit codes: 0 on
//! success, 1 when the statistics fail (separation, positivity, too many
//! failed fits), 2 for usage and schema errors.

pub mod config;
pub mod data;
pub mod format;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pats::estimators::FitOptions;
use pats::inference::{bootstrap, BootstrapMode, InferenceResult};
use pats::simulation::{run_replications, Scenario, SimReport};
use pats::EstimatorKind;

use config::{AnalysisConfig, ModeName, OutputFormat};

/// Environment variable holding the number of worker threads.
pub const WORKERS_VAR: &str = "PATS_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] pats::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_numerical() => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pats", version, about = "Optimal adaptive and partially adaptive treatment strategies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo study of the estimators on a benchmark scenario.
    Simulate(SimulateArgs),
    /// Fit the configured estimator with bootstrap confidence intervals.
    Analyze(AnalyzeArgs),
    /// Bootstrap the configured estimator and report the resampling tuning.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of s1, s2, s3 (one stage) or e1, e2, e3 (two stages).
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
    /// Subjects per dataset.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Number of simulated datasets.
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// `all` or a comma separated list of estimator ids.
    #[arg(long, default_value = "all", value_parser = parse_estimators)]
    pub estimators: Estimators,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Format written to stdout.
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
    /// Also write `<scenario>.csv` and `<scenario>.txt` into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimators(pub Vec<EstimatorKind>);

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: pats::Error| e.to_string())
}

fn parse_estimators(s: &str) -> Result<Estimators, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Estimators(EstimatorKind::ALL.to_vec()));
    }
    let kinds = s
        .split(',')
        .map(|k| k.parse().map_err(|e: pats::Error| e.to_string()))
        .collect::<Result<Vec<EstimatorKind>, _>>()?;
    Ok(Estimators(kinds))
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Analysis configuration (TOML).
    pub config: PathBuf,
    /// Overrides `output` of the configuration.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// Analysis configuration (TOML).
    pub config: PathBuf,
    /// Overrides `bootstrap.mode` of the configuration.
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Runs the study and writes the report to `out` (and to `--out` if given).
pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<SimReport, CliError> {
    let report = run_replications(
        args.scenario,
        args.n,
        args.reps,
        &args.estimators.0,
        args.seed,
        &FitOptions::default(),
    )?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let csv_path = dir.join(format!("{}.csv", args.scenario.id()));
        let file = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
        report::write_sim_csv(&report, std::io::BufWriter::new(file))?;
        let txt_path = dir.join(format!("{}.txt", args.scenario.id()));
        std::fs::write(&txt_path, report::sim_table(&report)).map_err(|e| CliError::io(&txt_path, e))?;
    }
    match args.format {
        OutputFormat::Csv => report::write_sim_csv(&report, &mut *out)?,
        OutputFormat::Table => write_all(out, report::sim_table(&report).as_bytes())?,
    }
    Ok(report)
}

/// Result of `analyze` or `bootstrap`.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub inference: InferenceResult,
    pub subjects: usize,
    pub rejected: usize,
}

/// Loads the data, fits and bootstraps the configured estimator.
pub fn run_analysis(cfg: &AnalysisConfig, mode: Option<ModeName>) -> Result<Analysis, CliError> {
    let boot = cfg.bootstrap_config(mode)?;
    if boot.mode == BootstrapMode::AdaptiveMn && cfg.stages.len() != 2 {
        return Err(CliError::Usage(format!(
            "the adaptive bootstrap needs exactly two stages, the configuration has {}",
            cfg.stages.len()
        )));
    }
    let specs = cfg.specs()?;
    let kind = cfg.kind()?;
    let options = FitOptions {
        censoring: cfg.censoring_spec()?,
        ..FitOptions::default()
    };
    let loaded = data::load(cfg)?;
    let inference = bootstrap(&loaded.data, &specs, kind, &options, &boot)?;
    Ok(Analysis {
        inference,
        subjects: loaded.data.n(),
        rejected: loaded.rejected,
    })
}

fn write_all(out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    out.write_all(bytes).map_err(|e| CliError::io(Path::new("<output>"), e))
}

fn emit(
    cfg: &AnalysisConfig,
    output: Option<&Path>,
    res: &InferenceResult,
    tuning: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    match cfg.format {
        OutputFormat::Csv => report::write_intervals_csv(res, tuning, &mut buf)?,
        OutputFormat::Table => buf.extend(report::intervals_table(res, tuning).into_bytes()),
    }
    match output.or(cfg.output.as_deref()) {
        Some(path) => std::fs::write(path, buf).map_err(|e| CliError::io(path, e)),
        None => write_all(out, &buf),
    }
}

/// `analyze`: estimates with bootstrap intervals.
pub fn cmd_analyze(config: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<Analysis, CliError> {
    let cfg = AnalysisConfig::load(config)?;
    let analysis = run_analysis(&cfg, None)?;
    emit(&cfg, output, &analysis.inference, false, out)?;
    Ok(analysis)
}

/// `bootstrap`: like `analyze`, plus the resample size, `p̂` and `α̂`.
pub fn cmd_bootstrap(
    config: &Path,
    mode: Option<ModeName>,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Analysis, CliError> {
    let cfg = AnalysisConfig::load(config)?;
    let analysis = run_analysis(&cfg, mode)?;
    emit(&cfg, output, &analysis.inference, true, out)?;
    Ok(analysis)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out).map(|_| None),
        Command::Analyze(a) => cmd_analyze(&a.config, a.output.as_deref(), out).map(Some),
        Command::Bootstrap(a) => cmd_bootstrap(&a.config, a.mode, a.output.as_deref(), out).map(Some),
    };
    match result {
        Ok(analysis) => {
            if let Some(a) = analysis.filter(|a| a.rejected > 0) {
                let _ = writeln!(
                    err,
                    "note: {} row(s) with missing values rejected, {} analyzed",
                    a.rejected, a.subjects
                );
            }
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Worker count from [`WORKERS_VAR`], `None` when unset.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{WORKERS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}
