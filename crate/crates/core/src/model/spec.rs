use crate::error::{Error, Result};
use crate::model::dataset::StagedDataset;
use crate::model::terms::{Term, TermList};

/// Model specification for one decision point.
///
/// The history `H_j` is split into tailoring columns `H*_j` and the rest
/// `H^C_j`. `blip_terms` describe the treatment effect as a function of the full
/// history, `tailoring_terms` the partially adaptive effect as a function of
/// `H*_j` only.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    /// Terms of the propensity model `E[A_j | H_j]`.
    pub treatment_terms: TermList,
    /// Terms of the treatment-free component `f_j(h_j; β_j)`.
    pub treatment_free_terms: TermList,
    /// Terms multiplying `a_j` in the full-history blip.
    pub blip_terms: TermList,
    /// Terms multiplying `a_j` in the tailored blip; only tailoring columns.
    pub tailoring_terms: TermList,
    pub tailoring_columns: Vec<String>,
    /// Propensity model `E[A_j | H*_j]`. See [`StageSpec::tailoring_treatment_terms`].
    pub tailoring_treatment: Option<TermList>,
}

impl StageSpec {
    pub fn new(
        treatment_terms: TermList,
        treatment_free_terms: TermList,
        blip_terms: TermList,
        tailoring_terms: TermList,
        tailoring_columns: Vec<String>,
    ) -> Self {
        StageSpec {
            treatment_terms,
            treatment_free_terms,
            blip_terms,
            tailoring_terms,
            tailoring_columns,
            tailoring_treatment: None,
        }
    }

    /// Terms of the propensity model given the tailoring columns only.
    ///
    /// Defaults to `treatment_terms` when those use tailoring columns only
    /// (so that `H* = H` reproduces the full model exactly), otherwise to an
    /// intercept plus main effects of the tailoring columns.
    pub fn tailoring_treatment_terms(&self) -> TermList {
        if let Some(t) = &self.tailoring_treatment {
            return t.clone();
        }
        if self.uses_tailoring_only(&self.treatment_terms) {
            return self.treatment_terms.clone();
        }
        let cols: Vec<&str> = self.tailoring_columns.iter().map(String::as_str).collect();
        TermList::intercept_and(&cols)
    }

    fn uses_tailoring_only(&self, terms: &TermList) -> bool {
        terms
            .columns()
            .iter()
            .all(|c| self.tailoring_columns.iter().any(|t| t == c))
    }

    /// True when every blip column is a tailoring column (`H^C` plays no role in the blip).
    pub fn blip_uses_tailoring_only(&self) -> bool {
        self.uses_tailoring_only(&self.blip_terms)
    }

    /// Blip columns outside the tailoring set.
    pub fn nontailoring_blip_columns(&self) -> Vec<&str> {
        self.blip_terms
            .columns()
            .into_iter()
            .filter(|c| !self.tailoring_columns.iter().any(|t| t == c))
            .collect()
    }

    /// Checks the specification against the history available at `stage`.
    /// `hierarchy` enforces that blip columns appear as main effects in the
    /// treatment-free terms, which weighted least squares estimators need.
    pub fn validate(&self, data: &StagedDataset, stage: usize, hierarchy: bool) -> Result<()> {
        for terms in [
            &self.treatment_terms,
            &self.treatment_free_terms,
            &self.blip_terms,
            &self.tailoring_terms,
            &self.tailoring_treatment_terms(),
        ] {
            terms.check_available(data, stage)?;
        }
        for c in &self.tailoring_columns {
            data.history_column(c, stage)?;
        }
        if !self.uses_tailoring_only(&self.tailoring_terms) {
            return Err(Error::Specification(format!(
                "tailoring terms {} reference columns outside the tailoring set {:?}",
                self.tailoring_terms, self.tailoring_columns
            )));
        }
        if !self.uses_tailoring_only(&self.tailoring_treatment_terms()) {
            return Err(Error::Specification(
                "the tailoring propensity model may only use tailoring columns".into(),
            ));
        }
        if self.blip_terms.is_empty() || self.tailoring_terms.is_empty() {
            return Err(Error::Specification("blip term lists must not be empty".into()));
        }
        if !self.treatment_terms.has_intercept() || !self.treatment_free_terms.has_intercept() {
            return Err(Error::Specification(
                "treatment and treatment-free models need an intercept".into(),
            ));
        }
        if hierarchy {
            for c in self.blip_terms.columns().into_iter().chain(self.tailoring_terms.columns()) {
                if !self.treatment_free_terms.has_main_effect(c) {
                    return Err(Error::Specification(format!(
                        "blip column `{c}` must also enter the treatment-free model as a main effect"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same specification with the blip restricted to the tailoring terms,
    /// i.e. the naive adaptive-strategy fit of a partially adaptive blip.
    pub fn restricted_to_tailoring(&self) -> StageSpec {
        StageSpec {
            blip_terms: self.tailoring_terms.clone(),
            ..self.clone()
        }
    }
}

/// Convenience: `[Intercept, main effects...]` terms from column names.
pub fn main_terms(columns: &[&str]) -> TermList {
    TermList::intercept_and(columns)
}

/// Terms with no intercept.
pub fn columns_only(columns: &[&str]) -> TermList {
    TermList::new(columns.iter().map(|c| Term::main(*c)).collect()).expect("distinct columns")
}
