//! The eight estimators: a backward recursion over stages `K, …, 1`.
//!
//! Every estimator first fits a full-history linear blip (by weighted least
//! squares or G-estimation). The adaptive estimators stop there. The partially
//! adaptive ones then obtain the tailored blip either by reweighting (IPTW),
//! by averaging over the empirical distribution of the non-tailoring
//! covariates (integrate) or by regressing the fitted contrasts on the
//! tailoring terms (CE).

mod marginalize;
mod stage;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::glm::logistic_fit_grouped;
use crate::model::{BlipCoefficients, BlipKind, HistoryLookup, StageSpec, StagedDataset, TermList};
use crate::weights::{balancing_weights, censoring_weights, iptw_weights, ratio_weights, WeightVector};

pub use marginalize::{ce_marginalize, integrate_marginalize, tailoring_cells, Cell, DEFAULT_MAX_LEVELS};
pub use stage::{dwols_stage, gest_blip_equations, gest_stage, BlipFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Dwols,
    Gest,
    IptwDwols,
    IptwGest,
    IntegrateDwols,
    IntegrateGest,
    CeDwols,
    CeGest,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::Dwols,
        EstimatorKind::Gest,
        EstimatorKind::IptwDwols,
        EstimatorKind::IptwGest,
        EstimatorKind::IntegrateDwols,
        EstimatorKind::IntegrateGest,
        EstimatorKind::CeDwols,
        EstimatorKind::CeGest,
    ];

    /// True for the six estimators of a partially adaptive strategy.
    pub fn is_pats(self) -> bool {
        !matches!(self, EstimatorKind::Dwols | EstimatorKind::Gest)
    }

    /// True when the blip is obtained by G-estimation rather than least squares.
    pub fn uses_gest(self) -> bool {
        matches!(
            self,
            EstimatorKind::Gest | EstimatorKind::IptwGest | EstimatorKind::IntegrateGest | EstimatorKind::CeGest
        )
    }

    /// The adaptive estimator sharing this one's fitting style.
    pub fn ats_counterpart(self) -> EstimatorKind {
        if self.uses_gest() {
            EstimatorKind::Gest
        } else {
            EstimatorKind::Dwols
        }
    }

    /// Identifier used on the command line and in CSV files.
    pub fn id(self) -> &'static str {
        match self {
            EstimatorKind::Dwols => "dwols",
            EstimatorKind::Gest => "gest",
            EstimatorKind::IptwDwols => "iptw-dwols",
            EstimatorKind::IptwGest => "iptw-gest",
            EstimatorKind::IntegrateDwols => "integrate-dwols",
            EstimatorKind::IntegrateGest => "integrate-gest",
            EstimatorKind::CeDwols => "ce-dwols",
            EstimatorKind::CeGest => "ce-gest",
        }
    }

    /// Human-readable name used in tables.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Dwols => "dWOLS",
            EstimatorKind::Gest => "G-est",
            EstimatorKind::IptwDwols => "IPTW+dWOLS",
            EstimatorKind::IptwGest => "IPTW+G-est",
            EstimatorKind::IntegrateDwols => "integrate dWOLS",
            EstimatorKind::IntegrateGest => "integrate G-est",
            EstimatorKind::CeDwols => "CE dWOLS",
            EstimatorKind::CeGest => "CE G-est",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', '+', ' '], "-");
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.id() == key || k.label().to_ascii_lowercase().replace(['+', ' '], "-") == key)
            .ok_or_else(|| {
                let ids: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.id()).collect();
                Error::InvalidArgument(format!("unknown estimator `{s}`; expected one of {}", ids.join(", ")))
            })
    }
}

/// Form of the treatment balancing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalancingForm {
    /// `|a - e|`
    #[default]
    Overlap,
    /// `a / e + (1 - a) / (1 - e)`
    Iptw,
}

impl BalancingForm {
    pub fn weights(self, a: &[f64], e: &[f64]) -> Result<WeightVector> {
        match self {
            BalancingForm::Overlap => balancing_weights(a, e),
            BalancingForm::Iptw => iptw_weights(a, e),
        }
    }
}

/// How IPTW+G-estimation weights the treatment-free estimating equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IptwGestBeta {
    /// `Σ ϖ_i f_i (G_i - f_i β) = 0`
    #[default]
    RatioWeighted,
    /// `Σ f_i (G_i - f_i β) = 0`
    Unweighted,
}

/// Inverse probability of censoring weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringSpec {
    /// Terms of the model for `P(uncensored | full record)`.
    pub terms: TermList,
    pub truncation_quantile: f64,
}

impl Default for CensoringSpec {
    fn default() -> Self {
        CensoringSpec {
            terms: TermList::intercept_and(&[]),
            truncation_quantile: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Balancing weights of the full-history fits.
    pub balancing: BalancingForm,
    /// Balancing weights `w*` of the IPTW fits, given the tailoring history.
    pub tailoring_balancing: BalancingForm,
    pub iptw_gest_beta: IptwGestBeta,
    /// Used when the data carry censoring indicators. Without it an
    /// intercept-only model (censoring completely at random) is assumed.
    pub censoring: Option<CensoringSpec>,
    /// Level cap of the integrate estimators.
    pub max_levels: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            balancing: BalancingForm::Overlap,
            tailoring_balancing: BalancingForm::Overlap,
            iptw_gest_beta: IptwGestBeta::RatioWeighted,
            censoring: None,
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

/// Everything estimated at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFit {
    pub stage: usize,
    /// Full-history blip used in later pseudo-outcomes.
    pub psi_ats: BlipCoefficients,
    /// Full-history blip fitted on the tailored pseudo-outcome.
    pub psi_dagger: BlipCoefficients,
    /// The blip the decision rule uses (over the tailoring terms for the
    /// partially adaptive estimators, over the blip terms otherwise).
    pub psi_pats: BlipCoefficients,
    /// Treatment-free coefficients of the final outcome model.
    pub beta: Vec<f64>,
    /// Coefficients of the treatment model `E[A | H]`.
    pub treatment_model: Vec<f64>,
    /// Coefficients of `E[A | H*]` (IPTW estimators only).
    pub tailoring_treatment_model: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: EstimatorKind,
    /// Stage fits in stage order, `stages[0]` is stage 1.
    pub stages: Vec<StageFit>,
    /// Censoring weights applied to every outcome regression.
    pub censoring_weights: Vec<f64>,
}

impl FitResult {
    pub fn stage(&self, stage: usize) -> &StageFit {
        &self.stages[stage - 1]
    }

    /// Decision-rule coefficients of every stage, stage 1 first.
    pub fn estimates(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.psi_pats.psi().iter().copied()).collect()
    }

    /// Parameter labels matching [`FitResult::estimates`], e.g. `psi1[x11]`.
    pub fn parameter_names(&self) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|s| {
                s.psi_pats
                    .terms()
                    .names()
                    .into_iter()
                    .map(move |t| format!("psi{}[{t}]", s.stage))
            })
            .collect()
    }

    /// Estimated optimal treatment at `stage` for the given history.
    pub fn decide(&self, stage: usize, h: &(impl HistoryLookup + ?Sized)) -> Result<u8> {
        self.stage(stage).psi_pats.optimal_decision(h)
    }
}

/// `γ(d^opt) - γ(a)` with the decision taken from `rule` and the observed-treatment
/// blip from `full`.
fn increment(rule: &[f64], full: &[f64], a: &[f64]) -> Vec<f64> {
    rule.iter()
        .zip(full)
        .zip(a)
        .map(|((r, c), a)| r.max(0.0) - a * c)
        .collect()
}

/// Pseudo-outcome increment of one later stage for every subject:
/// `γ*(d*, h*; ψ*) - γ(a, h; ψ)`, which for the adaptive estimators is
/// `γ(d^opt, h; ψ) - γ(a, h; ψ)`.
pub fn pseudo_outcome_increment(data: &StagedDataset, fit: &StageFit) -> Result<Vec<f64>> {
    let rule = fit.psi_pats.contrasts(data, fit.stage)?;
    let full = fit.psi_ats.contrasts(data, fit.stage)?;
    Ok(increment(&rule, &full, data.treatment(fit.stage)))
}

/// Pseudo-outcomes of every stage given the fitted later stages; element
/// `j - 1` holds `Ỹ_j`. The last one is the outcome itself.
pub fn pseudo_outcomes(data: &StagedDataset, fits: &[StageFit]) -> Result<Vec<Vec<f64>>> {
    let k = data.stages();
    let mut out = vec![data.outcome().to_vec(); k];
    let mut acc = vec![0.0; data.n()];
    for j in (1..k).rev() {
        let inc = pseudo_outcome_increment(data, &fits[j])?;
        for (a, i) in acc.iter_mut().zip(inc) {
            *a += i;
        }
        for (o, a) in out[j - 1].iter_mut().zip(&acc) {
            *o += a;
        }
    }
    Ok(out)
}

/// Censoring weights for `data` under `options` (all ones without censoring).
pub fn censoring_weight_vector(data: &StagedDataset, options: &FitOptions) -> Result<Vec<f64>> {
    match data.censored() {
        Some(c) if c.iter().any(|x| *x) => {
            let spec = options.censoring.clone().unwrap_or_default();
            let design = spec.terms.design(data, data.stages() + 1)?;
            Ok(censoring_weights(c, &design, spec.truncation_quantile)?.into_values())
        }
        _ => Ok(vec![1.0; data.n()]),
    }
}

/// Propensities and weights of the IPTW estimators at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TailoringWeights {
    /// Fitted `P(A = 1 | H*)`.
    pub e_star: Vec<f64>,
    pub e_star_coefficients: Vec<f64>,
    /// `w*(A, H*)`.
    pub balancing: Vec<f64>,
    /// `ϖ = P(A | H*) / P(A | H)`.
    pub ratio: Vec<f64>,
}

pub fn tailoring_weights(
    data: &StagedDataset,
    stage: usize,
    spec: &StageSpec,
    e_full: &[f64],
    form: BalancingForm,
) -> Result<TailoringWeights> {
    let a = data.treatment(stage);
    let fit = logistic_fit_grouped(&spec.tailoring_treatment_terms().design(data, stage)?, a, None, data.row_groups(stage))?;
    let balancing = form.weights(a, &fit.fitted)?.into_values();
    let ratio = ratio_weights(a, &fit.fitted, e_full)?.into_values();
    Ok(TailoringWeights {
        e_star: fit.fitted,
        e_star_coefficients: fit.coefficients,
        balancing,
        ratio,
    })
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn fit_stage(
    data: &StagedDataset,
    stage: usize,
    spec: &StageSpec,
    kind: EstimatorKind,
    options: &FitOptions,
    pseudo_y: &[f64],
    cw: &[f64],
) -> Result<StageFit> {
    let a = data.treatment(stage);
    let treatment = logistic_fit_grouped(&spec.treatment_terms.design(data, stage)?, a, None, data.row_groups(stage))?;
    let e = &treatment.fitted;
    let full_kind = if kind.is_pats() { BlipKind::Intermediate } else { BlipKind::Ats };

    let full = if kind.uses_gest() {
        gest_stage(data, stage, pseudo_y, &spec.treatment_free_terms, &spec.blip_terms, e, cw, cw, full_kind)?
    } else {
        let w = mul(&options.balancing.weights(a, e)?.into_values(), cw);
        dwols_stage(data, stage, pseudo_y, &spec.treatment_free_terms, &spec.blip_terms, &w, full_kind)?
    };

    if !kind.is_pats() {
        return Ok(StageFit {
            stage,
            psi_ats: full.psi.clone(),
            psi_dagger: full.psi.clone(),
            psi_pats: full.psi,
            beta: full.beta,
            treatment_model: treatment.coefficients,
            tailoring_treatment_model: None,
        });
    }

    let psi_dagger = full.psi;
    let psi_ats = psi_dagger.with_kind(BlipKind::Ats);
    let (psi_pats, beta, tailoring_model) = match kind {
        EstimatorKind::IptwDwols => {
            let tw = tailoring_weights(data, stage, spec, e, options.tailoring_balancing)?;
            let w = mul(&mul(&tw.balancing, &tw.ratio), cw);
            let fit = dwols_stage(
                data,
                stage,
                pseudo_y,
                &spec.treatment_free_terms,
                &spec.tailoring_terms,
                &w,
                BlipKind::Pats,
            )?;
            (fit.psi, fit.beta, Some(tw.e_star_coefficients))
        }
        EstimatorKind::IptwGest => {
            let tw = tailoring_weights(data, stage, spec, e, options.tailoring_balancing)?;
            let v = mul(&tw.ratio, cw);
            let u = match options.iptw_gest_beta {
                IptwGestBeta::RatioWeighted => v.clone(),
                IptwGestBeta::Unweighted => cw.to_vec(),
            };
            let fit = gest_stage(
                data,
                stage,
                pseudo_y,
                &spec.treatment_free_terms,
                &spec.tailoring_terms,
                &tw.e_star,
                &u,
                &v,
                BlipKind::Pats,
            )?;
            (fit.psi, fit.beta, Some(tw.e_star_coefficients))
        }
        EstimatorKind::IntegrateDwols | EstimatorKind::IntegrateGest => (
            integrate_marginalize(&psi_dagger, spec, data, stage, options.max_levels)?,
            full.beta,
            None,
        ),
        EstimatorKind::CeDwols | EstimatorKind::CeGest => {
            (ce_marginalize(&psi_dagger, spec, data, stage)?, full.beta, None)
        }
        EstimatorKind::Dwols | EstimatorKind::Gest => unreachable!(),
    };
    Ok(StageFit {
        stage,
        psi_ats,
        psi_dagger,
        psi_pats,
        beta,
        treatment_model: treatment.coefficients,
        tailoring_treatment_model: tailoring_model,
    })
}

/// Checks `specs` against `data` for estimator `kind`.
pub fn validate_specs(data: &StagedDataset, specs: &[StageSpec], kind: EstimatorKind) -> Result<()> {
    if specs.len() != data.stages() {
        return Err(Error::Specification(format!(
            "{} stage specifications for {} stages",
            specs.len(),
            data.stages()
        )));
    }
    for (j0, spec) in specs.iter().enumerate() {
        spec.validate(data, j0 + 1, !kind.uses_gest()).map_err(|e| e.at_stage(j0 + 1))?;
    }
    Ok(())
}

/// Fits estimator `kind` by backward recursion over the stages of `data`.
pub fn fit(data: &StagedDataset, specs: &[StageSpec], kind: EstimatorKind, options: &FitOptions) -> Result<FitResult> {
    validate_specs(data, specs, kind)?;
    fit_unchecked(data, specs, kind, options)
}

/// [`fit`] without re-validating the specifications; for resampled data whose
/// columns are known to match.
pub(crate) fn fit_unchecked(
    data: &StagedDataset,
    specs: &[StageSpec],
    kind: EstimatorKind,
    options: &FitOptions,
) -> Result<FitResult> {
    let k = data.stages();
    let cw = censoring_weight_vector(data, options)?;
    let mut pseudo_y = data.outcome().to_vec();
    let mut fits: Vec<StageFit> = Vec::with_capacity(k);
    for j in (1..=k).rev() {
        let sf = fit_stage(data, j, &specs[j - 1], kind, options, &pseudo_y, &cw).map_err(|e| e.at_stage(j))?;
        if j > 1 {
            let inc = pseudo_outcome_increment(data, &sf).map_err(|e| e.at_stage(j))?;
            for (y, i) in pseudo_y.iter_mut().zip(inc) {
                *y += i;
            }
        }
        fits.push(sf);
    }
    fits.reverse();
    Ok(FitResult {
        kind,
        stages: fits,
        censoring_weights: cw,
    })
}
