//! Bootstrap inference for the decision-rule parameters.
//!
//! The plain bootstrap resamples `n` subjects with replacement. With two
//! stages, the stage-1 parameters are non-regular whenever the stage-2 blip is
//! close to zero for a share of subjects; the adaptive m-out-of-n bootstrap
//! then resamples only `m < n` subjects, with `m` tuned by a double bootstrap.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit, fit_unchecked, EstimatorKind, FitOptions};
use crate::model::{StageSpec, StagedDataset};
use crate::rng::{child_rng, derive_seed, tags, Rng};
use crate::stats::{covariance, quantile_sorted};

/// Largest tolerated share of failed refits.
pub const MAX_FAILURE_RATE: f64 = 0.05;
/// Redraws allowed for a single replicate before giving up.
pub const MAX_RETRIES: usize = 20;
/// Normal quantile used for the per-subject intervals of the nonregularity estimate.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BootstrapMode {
    #[default]
    Plain,
    AdaptiveMn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    /// First-stage (and final) replicates.
    pub b1: usize,
    /// Nested replicates per first-stage replicate.
    pub b2: usize,
    pub alpha_start: f64,
    pub alpha_step: f64,
    /// The tuning loop gives up beyond this value.
    pub alpha_max: f64,
    pub ci_level: f64,
    pub seed: u64,
    pub mode: BootstrapMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b1: 500,
            b2: 500,
            alpha_start: 0.025,
            alpha_step: 0.025,
            alpha_max: 0.5,
            ci_level: 0.95,
            seed: 0,
            mode: BootstrapMode::Plain,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b1 == 0 || self.b2 == 0 {
            return Err(Error::InvalidArgument("bootstrap replicate counts must be positive".into()));
        }
        if !(self.alpha_start > 0.0 && self.alpha_step > 0.0 && self.alpha_max >= self.alpha_start) {
            return Err(Error::InvalidArgument(
                "need 0 < alpha_start <= alpha_max and a positive alpha_step".into(),
            ));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterInterval {
    pub stage: usize,
    pub term: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub intervals: Vec<ParameterInterval>,
    /// Estimated share of subjects with no clear optimal stage-2 treatment
    /// (adaptive mode only).
    pub p_hat: Option<f64>,
    /// Selected `α` (adaptive mode with `p̂ > 0` only).
    pub alpha_hat: Option<f64>,
    /// Resample size of the replicates behind the intervals.
    pub m_hat: usize,
    /// Replicate estimates, one row per replicate.
    pub replicates: Vec<Vec<f64>>,
    /// Refits that failed and were redrawn.
    pub failures: usize,
}

/// `m = n^{(1 + α(1 - p)) / (1 + α)}` rounded and clamped to `[1, n]`;
/// exactly `n` when `p = 0`.
pub fn choose_m(n: usize, alpha: f64, p_hat: f64) -> usize {
    if p_hat == 0.0 || n <= 1 {
        return n.max(1);
    }
    let e = (1.0 + alpha * (1.0 - p_hat)) / (1.0 + alpha);
    let m = (n as f64).powf(e).round() as usize;
    m.clamp(1, n)
}

/// Percentile interval of each column of `rows`.
pub fn percentile_intervals(rows: &[Vec<f64>], level: f64) -> Vec<(f64, f64)> {
    let p = rows.first().map_or(0, Vec::len);
    let lo = (1.0 - level) / 2.0;
    (0..p)
        .map(|j| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            (quantile_sorted(&v, lo), quantile_sorted(&v, 1.0 - lo))
        })
        .collect()
}

/// A problem ready for repeated refitting.
struct Problem<'a> {
    data: &'a StagedDataset,
    specs: &'a [StageSpec],
    kind: EstimatorKind,
    options: &'a FitOptions,
}

/// One successful replicate: the subject indices and its estimates.
struct Draw {
    indices: Vec<usize>,
    estimates: Vec<f64>,
    failures: usize,
}

impl Problem<'_> {
    /// Draws `m` subjects from `pool` (indices into the data) until the fit
    /// succeeds.
    fn draw(&self, pool: &[usize], m: usize, rng: &mut Rng) -> Result<Draw> {
        let mut failures = 0;
        let mut last = None;
        for _ in 0..=MAX_RETRIES {
            let indices: Vec<usize> = (0..m).map(|_| pool[rng.random_range(0..pool.len())]).collect();
            let sample = self.data.subset(&indices);
            match fit_unchecked(&sample, self.specs, self.kind, self.options) {
                Ok(r) => {
                    return Ok(Draw {
                        indices,
                        estimates: r.estimates(),
                        failures,
                    })
                }
                Err(e) => {
                    failures += 1;
                    last = Some(e);
                }
            }
        }
        Err(Error::Inference(format!(
            "a bootstrap replicate failed {} times in a row; last error: {}",
            MAX_RETRIES + 1,
            last.expect("at least one failure")
        )))
    }

    /// `b` replicates of size `m` from `pool`, in parallel and in index order.
    fn replicate(&self, pool: &[usize], m: usize, b: usize, seed: u64, tag: u64, parallel: bool) -> Result<Vec<Draw>> {
        let one = |r: usize| self.draw(pool, m, &mut child_rng(seed, tag, r as u64));
        let draws: Vec<Result<Draw>> = if parallel {
            (0..b).into_par_iter().map(one).collect()
        } else {
            (0..b).map(one).collect()
        };
        let draws: Vec<Draw> = draws.into_iter().collect::<Result<_>>()?;
        let failures: usize = draws.iter().map(|d| d.failures).sum();
        let rate = failures as f64 / (failures + b) as f64;
        if rate > MAX_FAILURE_RATE {
            return Err(Error::Inference(format!(
                "{failures} of {} refits failed ({:.1}%), above the {:.0}% budget",
                failures + b,
                100.0 * rate,
                100.0 * MAX_FAILURE_RATE
            )));
        }
        Ok(draws)
    }
}

fn result_from(
    point: &crate::estimators::FitResult,
    draws: Vec<Draw>,
    level: f64,
    m_hat: usize,
    p_hat: Option<f64>,
    alpha_hat: Option<f64>,
) -> InferenceResult {
    let failures = draws.iter().map(|d| d.failures).sum();
    let replicates: Vec<Vec<f64>> = draws.into_iter().map(|d| d.estimates).collect();
    let ci = percentile_intervals(&replicates, level);
    let estimates = point.estimates();
    let mut intervals = Vec::with_capacity(estimates.len());
    let mut k = 0;
    for s in &point.stages {
        for term in s.psi_pats.terms().names() {
            intervals.push(ParameterInterval {
                stage: s.stage,
                term,
                estimate: estimates[k],
                lower: ci[k].0,
                upper: ci[k].1,
            });
            k += 1;
        }
    }
    InferenceResult {
        intervals,
        p_hat,
        alpha_hat,
        m_hat,
        replicates,
        failures,
    }
}

/// Nonparametric bootstrap with `config.b1` replicates of size `n`.
pub fn plain_bootstrap(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
    config: &BootstrapConfig,
) -> Result<InferenceResult> {
    config.validate()?;
    let point = fit(data, specs, kind, options)?;
    let problem = Problem { data, specs, kind, options };
    let all: Vec<usize> = (0..data.n()).collect();
    let draws = problem.replicate(&all, data.n(), config.b1, config.seed, tags::BOOTSTRAP, true)?;
    Ok(result_from(&point, draws, config.ci_level, data.n(), None, None))
}

/// Share of subjects whose normal-approximation interval for the stage-2
/// tailored contrast `z(h*₂) ψ*₂` contains 0, using the covariance of the
/// bootstrap replicates `psi2_replicates`.
pub fn nonregularity_from_replicates(
    data: &StagedDataset,
    spec2: &StageSpec,
    psi2: &[f64],
    psi2_replicates: &[Vec<f64>],
) -> Result<f64> {
    let z = spec2.tailoring_terms.design(data, 2)?;
    let p = z.ncols();
    if psi2.len() != p || psi2_replicates.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("stage-2 coefficients do not match the tailoring terms".into()));
    }
    let cov = covariance(psi2_replicates);
    let lin = z.mul_vec(psi2);
    let mut ties = 0;
    for (i, l) in lin.iter().enumerate() {
        let row = z.row(i);
        let mut var = 0.0;
        for j in 0..p {
            for k in 0..p {
                var += row[j] * cov[j * p + k] * row[k];
            }
        }
        if l.abs() <= Z_95 * var.max(0.0).sqrt() {
            ties += 1;
        }
    }
    Ok(ties as f64 / data.n() as f64)
}

fn require_two_stages(data: &StagedDataset) -> Result<()> {
    if data.stages() != 2 {
        return Err(Error::Unsupported(format!(
            "the adaptive m-out-of-n bootstrap is defined for two stages, the data have {}",
            data.stages()
        )));
    }
    Ok(())
}

/// Columns of the stage-2 parameters within [`crate::estimators::FitResult::estimates`].
fn stage_two_block(specs: &[StageSpec]) -> std::ops::Range<usize> {
    let start = specs[0].tailoring_terms.len();
    start..start + specs[1].tailoring_terms.len()
}

/// Estimates `p`, the share of subjects without a clearly optimal stage-2
/// treatment, from `b1` plain bootstrap replicates.
pub fn estimate_nonregularity(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
    b1: usize,
    seed: u64,
) -> Result<f64> {
    require_two_stages(data)?;
    if !kind.is_pats() {
        return Err(Error::Unsupported("nonregularity is estimated for the tailored blip".into()));
    }
    let point = fit(data, specs, kind, options)?;
    let problem = Problem { data, specs, kind, options };
    let all: Vec<usize> = (0..data.n()).collect();
    let draws = problem.replicate(&all, data.n(), b1, seed, tags::NONREGULARITY, true)?;
    let block = stage_two_block(specs);
    let reps: Vec<Vec<f64>> = draws.iter().map(|d| d.estimates[block.clone()].to_vec()).collect();
    nonregularity_from_replicates(data, &specs[1], point.stage(2).psi_pats.psi(), &reps)
}

/// Diagnostics of one pass of the tuning loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningStep {
    pub alpha: f64,
    pub m: usize,
    /// Per parameter, share of nested intervals covering their replicate's estimate.
    pub coverage: Vec<f64>,
}

/// Adaptive m-out-of-n bootstrap for two-stage data.
///
/// 1. `b1` plain replicates give `p̂` (see [`nonregularity_from_replicates`]).
/// 2. If `p̂ = 0` these replicates are the answer (`m̂ = n`).
/// 3. Otherwise, for `α = α₀, α₀ + δ, …`: within each first-stage replicate,
///    `b2` nested resamples of size `m(α)` give a percentile interval per
///    parameter; stop at the first `α` where, for every parameter, at least
///    `ci_level` of these intervals contain their replicate's estimate.
/// 4. A final `b1` replicates of size `m̂` give the percentile intervals.
pub fn adaptive_mn_bootstrap(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
    config: &BootstrapConfig,
) -> Result<InferenceResult> {
    adaptive_mn_bootstrap_traced(data, specs, kind, options, config).map(|(r, _)| r)
}

/// [`adaptive_mn_bootstrap`] that also returns the tuning steps.
pub fn adaptive_mn_bootstrap_traced(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
    config: &BootstrapConfig,
) -> Result<(InferenceResult, Vec<TuningStep>)> {
    config.validate()?;
    require_two_stages(data)?;
    let point = fit(data, specs, kind, options)?;
    let n = data.n();
    let problem = Problem { data, specs, kind, options };
    let all: Vec<usize> = (0..n).collect();
    let first = problem.replicate(&all, n, config.b1, config.seed, tags::BOOTSTRAP, true)?;

    let block = stage_two_block(specs);
    let reps2: Vec<Vec<f64>> = first.iter().map(|d| d.estimates[block.clone()].to_vec()).collect();
    let p_hat = nonregularity_from_replicates(data, &specs[1], point.stage(2).psi_pats.psi(), &reps2)?;
    if p_hat == 0.0 {
        return Ok((result_from(&point, first, config.ci_level, n, Some(0.0), None), Vec::new()));
    }

    let mut steps = Vec::new();
    let mut step = 0u64;
    loop {
        let alpha = config.alpha_start + step as f64 * config.alpha_step;
        if alpha > config.alpha_max + 1e-12 {
            let last = steps
                .last()
                .map(|s: &TuningStep| format!("; last coverage {:?} at m = {}", s.coverage, s.m))
                .unwrap_or_default();
            return Err(Error::Tuning(format!(
                "no alpha up to {} reached {}% nested coverage (p̂ = {p_hat:.3}){last}",
                config.alpha_max,
                100.0 * config.ci_level
            )));
        }
        let m = choose_m(n, alpha, p_hat);
        let nested_seed = derive_seed(config.seed, tags::NESTED, step);
        let covered: Vec<Vec<bool>> = first
            .par_iter()
            .enumerate()
            .map(|(b, d)| {
                let inner = problem.replicate(&d.indices, m, config.b2, nested_seed, b as u64, false)?;
                let rows: Vec<Vec<f64>> = inner.into_iter().map(|x| x.estimates).collect();
                Ok(percentile_intervals(&rows, config.ci_level)
                    .iter()
                    .zip(&d.estimates)
                    .map(|((lo, hi), e)| lo <= e && e <= hi)
                    .collect())
            })
            .collect::<Result<_>>()?;
        let p = first[0].estimates.len();
        let coverage: Vec<f64> = (0..p)
            .map(|j| covered.iter().filter(|c| c[j]).count() as f64 / covered.len() as f64)
            .collect();
        let done = coverage.iter().all(|c| *c >= config.ci_level);
        steps.push(TuningStep { alpha, m, coverage });
        if done {
            let last = problem.replicate(&all, m, config.b1, config.seed, tags::FINAL, true)?;
            let res = result_from(&point, last, config.ci_level, m, Some(p_hat), Some(alpha));
            return Ok((res, steps));
        }
        step += 1;
    }
}

/// Runs the bootstrap selected by `config.mode`.
pub fn bootstrap(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
    config: &BootstrapConfig,
) -> Result<InferenceResult> {
    match config.mode {
        BootstrapMode::Plain => plain_bootstrap(data, specs, kind, options, config),
        BootstrapMode::AdaptiveMn => adaptive_mn_bootstrap(data, specs, kind, options, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_m_examples() {
        assert_eq!(choose_m(300, 0.025, 0.0), 300);
        assert_eq!(choose_m(300, 0.025, 1.0), 261);
        assert_eq!(choose_m(300, 0.025, 0.47), 281);
        assert_eq!(choose_m(1, 0.5, 1.0), 1);
    }

    #[test]
    fn percentile_interval_of_a_ramp() {
        let rows: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64]).collect();
        let ci = percentile_intervals(&rows, 0.95);
        assert!((ci[0].0 - 2.5).abs() < 1e-12 && (ci[0].1 - 97.5).abs() < 1e-12);
    }
}
