use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::glm::RowGroups;
use crate::model::terms::HistoryLookup;

/// Raw input for one decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    pub treatment_name: String,
    pub treatment: Vec<u8>,
    /// Covariates measured before this stage's treatment.
    pub covariates: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
struct Column {
    name: String,
    values: Vec<f64>,
    /// First stage (1-based) whose history contains this column.
    available_from: usize,
}

/// Longitudinal data: `n` subjects observed over `K` stages, each stage with
/// covariates and a binary treatment, followed by a final outcome.
///
/// The history at stage `j` holds every covariate measured at stages `1..=j`
/// and the treatments of stages `1..j`. Stage `K + 1` addresses the complete
/// record, including the last treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedDataset {
    n: usize,
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    treatment_cols: Vec<usize>,
    outcome: Vec<f64>,
    censored: Option<Vec<bool>>,
    groups: GroupCache,
}

/// Lazily computed subject groupings, one per stage. Invisible to equality
/// and dropped on clone.
#[derive(Debug, Default)]
struct GroupCache(Vec<OnceLock<RowGroups>>);

impl GroupCache {
    fn new(stages: usize) -> Self {
        GroupCache((0..=stages).map(|_| OnceLock::new()).collect())
    }
}

impl GroupCache {
    /// Groupings of a subset, derived from those already computed.
    fn pick(&self, rows: &[usize]) -> Self {
        GroupCache(
            self.0
                .iter()
                .map(|cell| {
                    let out = OnceLock::new();
                    if let Some(g) = cell.get() {
                        let _ = out.set(g.pick(rows));
                    }
                    out
                })
                .collect(),
        )
    }
}

impl Clone for GroupCache {
    fn clone(&self) -> Self {
        GroupCache::new(self.0.len() - 1)
    }
}

impl PartialEq for GroupCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl StagedDataset {
    pub fn new(stages: Vec<StageData>, outcome: Vec<f64>, censored: Option<Vec<bool>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one stage".into()));
        }
        let n = outcome.len();
        let mut columns = Vec::new();
        let mut treatment_cols = Vec::with_capacity(stages.len());
        for (j0, stage) in stages.into_iter().enumerate() {
            let j = j0 + 1;
            for (name, values) in stage.covariates {
                if values.len() != n {
                    return Err(Error::Dimension(format!(
                        "covariate `{name}` has {} values for {n} subjects",
                        values.len()
                    )));
                }
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "covariate `{name}` is not finite for subject {i}"
                    )));
                }
                columns.push(Column {
                    name,
                    values,
                    available_from: j,
                });
            }
            if stage.treatment.len() != n {
                return Err(Error::Dimension(format!(
                    "treatment `{}` has {} values for {n} subjects",
                    stage.treatment_name,
                    stage.treatment.len()
                )));
            }
            if let Some(i) = stage.treatment.iter().position(|&a| a > 1) {
                return Err(Error::Unsupported(format!(
                    "treatment `{}` takes value {} for subject {i}; only binary treatments are supported",
                    stage.treatment_name, stage.treatment[i]
                )));
            }
            treatment_cols.push(columns.len());
            columns.push(Column {
                name: stage.treatment_name,
                values: stage.treatment.iter().map(|&a| f64::from(a)).collect(),
                available_from: j + 1,
            });
        }

        let mut index = HashMap::with_capacity(columns.len());
        for (k, c) in columns.iter().enumerate() {
            if index.insert(c.name.clone(), k).is_some() {
                return Err(Error::Specification(format!("duplicate column name `{}`", c.name)));
            }
        }
        if let Some(c) = &censored {
            if c.len() != n {
                return Err(Error::Dimension(format!(
                    "censoring indicator has {} values for {n} subjects",
                    c.len()
                )));
            }
        }
        for i in 0..n {
            let uncensored = censored.as_ref().is_none_or(|c| !c[i]);
            if uncensored && !outcome[i].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "outcome of uncensored subject {i} is not finite"
                )));
            }
        }
        let groups = GroupCache::new(treatment_cols.len());
        Ok(StagedDataset {
            n,
            columns,
            index,
            treatment_cols,
            outcome,
            censored,
            groups,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stages(&self) -> usize {
        self.treatment_cols.len()
    }

    /// Treatment at stage `j` (1-based) as 0.0 / 1.0.
    pub fn treatment(&self, stage: usize) -> &[f64] {
        &self.columns[self.treatment_cols[stage - 1]].values
    }

    pub fn treatment_name(&self, stage: usize) -> &str {
        &self.columns[self.treatment_cols[stage - 1]].name
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn censored(&self) -> Option<&[bool]> {
        self.censored.as_deref()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Stage at which `name` enters the history, if it exists.
    pub fn available_from(&self, name: &str) -> Option<usize> {
        self.index.get(name).map(|&k| self.columns[k].available_from)
    }

    /// Values of `name`, provided it belongs to the history at `stage`.
    pub fn history_column(&self, name: &str, stage: usize) -> Result<&[f64]> {
        match self.index.get(name) {
            Some(&k) if self.columns[k].available_from <= stage => Ok(&self.columns[k].values),
            _ => Err(Error::MissingColumn(name.to_string())),
        }
    }

    /// Names of the history columns at `stage`, in dataset order.
    pub fn history_columns(&self, stage: usize) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.available_from <= stage)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn history(&self, subject: usize, stage: usize) -> SubjectHistory<'_> {
        SubjectHistory {
            data: self,
            subject,
            stage,
        }
    }

    /// New dataset made of the listed subjects (duplicates allowed), whole
    /// trajectories at a time.
    pub fn subset(&self, subjects: &[usize]) -> StagedDataset {
        let pick = |v: &[f64]| subjects.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        StagedDataset {
            n: subjects.len(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: pick(&c.values),
                    available_from: c.available_from,
                })
                .collect(),
            index: self.index.clone(),
            treatment_cols: self.treatment_cols.clone(),
            outcome: pick(&self.outcome),
            censored: self
                .censored
                .as_ref()
                .map(|c| subjects.iter().map(|&i| c[i]).collect()),
            groups: self.groups.pick(subjects),
        }
    }

    /// Subjects grouped by identical history at `stage` together with the
    /// treatment taken there; any model term at that stage, and the
    /// treatment, is constant within a group. Stage `K + 1` groups by the
    /// complete record.
    pub fn row_groups(&self, stage: usize) -> &RowGroups {
        assert!((1..=self.stages() + 1).contains(&stage), "stage {stage} out of range");
        self.groups.0[stage - 1].get_or_init(|| {
            let mut cols: Vec<&[f64]> = self
                .columns
                .iter()
                .filter(|c| c.available_from <= stage)
                .map(|c| c.values.as_slice())
                .collect();
            if stage <= self.stages() {
                cols.push(self.treatment(stage));
            }
            RowGroups::from_columns(&cols, self.n)
        })
    }
}

/// One subject's history at one stage.
#[derive(Debug, Clone, Copy)]
pub struct SubjectHistory<'a> {
    data: &'a StagedDataset,
    subject: usize,
    stage: usize,
}

impl HistoryLookup for SubjectHistory<'_> {
    fn value(&self, column: &str) -> Option<f64> {
        self.data
            .history_column(column, self.stage)
            .ok()
            .map(|v| v[self.subject])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_stage() -> StagedDataset {
        StagedDataset::new(
            vec![
                StageData {
                    treatment_name: "a1".into(),
                    treatment: vec![0, 1, 1],
                    covariates: vec![("x1".into(), vec![1.0, 2.0, 3.0])],
                },
                StageData {
                    treatment_name: "a2".into(),
                    treatment: vec![1, 0, 1],
                    covariates: vec![("x2".into(), vec![4.0, 5.0, 6.0])],
                },
            ],
            vec![0.5, 1.5, 2.5],
            None,
        )
        .unwrap()
    }

    #[test]
    fn history_grows_with_stage() {
        let d = two_stage();
        assert_eq!(d.history_columns(1), vec!["x1"]);
        assert_eq!(d.history_columns(2), vec!["x1", "a1", "x2"]);
        assert_eq!(d.history_columns(3), vec!["x1", "a1", "x2", "a2"]);
        assert!(matches!(d.history_column("a1", 1), Err(Error::MissingColumn(_))));
        assert_eq!(d.history(1, 2).value("a1"), Some(1.0));
    }

    #[test]
    fn subset_keeps_trajectories_together() {
        let d = two_stage().subset(&[2, 2, 0]);
        assert_eq!(d.treatment(1), &[1.0, 1.0, 0.0]);
        assert_eq!(d.treatment(2), &[1.0, 1.0, 1.0]);
        assert_eq!(d.outcome(), &[2.5, 2.5, 0.5]);
        assert_eq!(d.history_column("x2", 2).unwrap(), &[6.0, 6.0, 4.0]);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err = StagedDataset::new(
            vec![StageData {
                treatment_name: "a".into(),
                treatment: vec![0, 2],
                covariates: vec![],
            }],
            vec![0.0, 1.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn censored_outcome_may_be_missing() {
        let stage = StageData {
            treatment_name: "a".into(),
            treatment: vec![0, 1],
            covariates: vec![],
        };
        assert!(StagedDataset::new(vec![stage.clone()], vec![1.0, f64::NAN], None).is_err());
        assert!(StagedDataset::new(vec![stage], vec![1.0, f64::NAN], Some(vec![false, true])).is_ok());
    }
}
