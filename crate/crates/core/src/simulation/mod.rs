//! Benchmark scenarios, their true parameters, and the Monte Carlo harness.

mod scenario;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit, EstimatorKind, FitOptions, FitResult};
use crate::model::{BlipCoefficients, BlipKind};
use crate::rng::{derive_seed, tags};
use crate::stats::{mean, sd};

pub use scenario::Scenario;

/// Largest tolerated share of failed fits per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Decision quality of one fit on the data it was fitted to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionMetrics {
    /// Subjects whose estimated decisions all match the true optimal ones.
    pub correct: usize,
    pub subjects: usize,
    /// Sum over subjects of the expected loss.
    pub total_loss: f64,
}

impl DecisionMetrics {
    pub fn proportion_correct(&self) -> f64 {
        self.correct as f64 / self.subjects as f64
    }
}

/// Compares the estimated rule of `result` with the true optimal tailored
/// rule at every subject's observed tailoring history.
///
/// A wrong decision at stage `j` costs `|γ*_j(1, h*_j)|`, the true tailored
/// blip there; a subject's expected loss is the sum over its stages. With a
/// single stage this is the difference in expected outcome between the
/// true and the estimated rule.
pub fn decision_metrics(scenario: Scenario, data: &crate::StagedDataset, result: &FitResult) -> Result<DecisionMetrics> {
    let truth = scenario.true_psi_star();
    let terms = scenario.tailoring_terms();
    let mut correct = vec![true; data.n()];
    let mut loss = vec![0.0; data.n()];
    for (j0, psi) in truth.into_iter().enumerate() {
        let stage = j0 + 1;
        let true_blip = BlipCoefficients::new(stage, BlipKind::Pats, terms[j0].clone(), psi)?;
        let t = true_blip.contrasts(data, stage)?;
        let est = result.stage(stage).psi_pats.contrasts(data, stage)?;
        for i in 0..data.n() {
            if (t[i] > 0.0) != (est[i] > 0.0) {
                correct[i] = false;
                loss[i] += t[i].abs();
            }
        }
    }
    Ok(DecisionMetrics {
        correct: correct.iter().filter(|c| **c).count(),
        subjects: data.n(),
        total_loss: loss.iter().sum(),
    })
}

/// Outcome of one estimator on one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFit {
    pub kind: EstimatorKind,
    pub estimates: Vec<f64>,
    pub metrics: DecisionMetrics,
}

/// One replication: the dataset seed and every estimator's outcome (`Err`
/// when the fit failed).
#[derive(Debug, Clone)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub fits: Vec<std::result::Result<ReplicationFit, Error>>,
}

/// Generates replication `index` and fits every estimator to the same data.
pub fn run_replication(
    scenario: Scenario,
    n: usize,
    seed: u64,
    index: usize,
    kinds: &[EstimatorKind],
    options: &FitOptions,
) -> Replication {
    let data_seed = derive_seed(seed, tags::REPLICATION, index as u64);
    let data = scenario.generate(n, data_seed);
    let fits = kinds
        .iter()
        .map(|&kind| {
            let specs = scenario.analysis_specs(kind);
            let res = fit(&data, &specs, kind, options)?;
            let metrics = decision_metrics(scenario, &data, &res)?;
            Ok(ReplicationFit {
                kind,
                estimates: res.estimates(),
                metrics,
            })
        })
        .collect();
    Replication {
        index,
        seed: data_seed,
        fits,
    }
}

/// Bias and spread of one parameter across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    /// `(mean - truth) / truth × 100`.
    pub relative_bias_pct: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSummary {
    pub kind: EstimatorKind,
    pub parameters: Vec<ParameterSummary>,
    /// Share of subject decisions matching the true optimal rule, in percent.
    pub proportion_optimal_pct: f64,
    /// Expected loss averaged over subjects, then replications.
    pub mean_loss: f64,
    /// Expected loss averaged over misidentified subjects only (NaN if none).
    pub loss_when_wrong: f64,
    pub failures: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
}

impl SimReport {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.kind == kind)
    }
}

/// Names of the reported parameters, e.g. `psi0_1` for the intercept of stage 1.
pub fn parameter_names(scenario: Scenario) -> Vec<String> {
    let k = scenario.stages();
    (1..=k)
        .flat_map(|j| (0..2).map(move |p| format!("psi{p}_{j}")))
        .collect()
}

/// Summarizes replications into a report. Fails if any estimator failed on
/// more than [`MAX_FAILURE_RATE`] of them.
pub fn summarize(
    scenario: Scenario,
    n: usize,
    seed: u64,
    kinds: &[EstimatorKind],
    reps: &[Replication],
) -> Result<SimReport> {
    let truth: Vec<f64> = scenario.true_psi_star().into_iter().flatten().collect();
    let names = parameter_names(scenario);
    let mut estimators = Vec::with_capacity(kinds.len());
    for (e, &kind) in kinds.iter().enumerate() {
        let ok: Vec<&ReplicationFit> = reps.iter().filter_map(|r| r.fits[e].as_ref().ok()).collect();
        let failures = reps.len() - ok.len();
        if failures as f64 > MAX_FAILURE_RATE * reps.len() as f64 || ok.is_empty() {
            let first = reps.iter().find_map(|r| r.fits[e].as_ref().err()).cloned();
            return Err(Error::Inference(format!(
                "{kind} failed on {failures} of {} replications (first error: {})",
                reps.len(),
                first.map_or_else(|| "none".into(), |e| e.to_string())
            )));
        }
        let parameters = names
            .iter()
            .enumerate()
            .map(|(p, name)| {
                let v: Vec<f64> = ok.iter().map(|f| f.estimates[p]).collect();
                let m = mean(&v);
                ParameterSummary {
                    name: name.clone(),
                    truth: truth[p],
                    mean: m,
                    relative_bias_pct: (m - truth[p]) / truth[p] * 100.0,
                    sd: sd(&v),
                }
            })
            .collect();
        let props: Vec<f64> = ok.iter().map(|f| f.metrics.proportion_correct()).collect();
        let losses: Vec<f64> = ok
            .iter()
            .map(|f| f.metrics.total_loss / f.metrics.subjects as f64)
            .collect();
        let wrong: usize = ok.iter().map(|f| f.metrics.subjects - f.metrics.correct).sum();
        let total_loss: f64 = ok.iter().map(|f| f.metrics.total_loss).sum();
        estimators.push(EstimatorSummary {
            kind,
            parameters,
            proportion_optimal_pct: 100.0 * mean(&props),
            mean_loss: mean(&losses),
            loss_when_wrong: if wrong == 0 { f64::NAN } else { total_loss / wrong as f64 },
            failures,
            used: ok.len(),
        });
    }
    Ok(SimReport {
        scenario,
        n,
        replications: reps.len(),
        seed,
        estimators,
    })
}

/// Runs `replications` independent datasets of size `n` in parallel and
/// summarizes every estimator in `kinds`.
pub fn run_replications(
    scenario: Scenario,
    n: usize,
    replications: usize,
    kinds: &[EstimatorKind],
    seed: u64,
    options: &FitOptions,
) -> Result<SimReport> {
    if n == 0 || replications == 0 || kinds.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one subject, one replication and one estimator".into(),
        ));
    }
    let reps: Vec<Replication> = (0..replications)
        .into_par_iter()
        .map(|r| run_replication(scenario, n, seed, r, kinds, options))
        .collect();
    summarize(scenario, n, seed, kinds, &reps)
}
