//! Longitudinal data, model terms, stage specifications and blip functions.

mod blip;
mod dataset;
mod spec;
mod terms;

pub use blip::{BlipCoefficients, BlipKind};
pub use dataset::{StageData, StagedDataset, SubjectHistory};
pub use spec::{columns_only, main_terms, StageSpec};
pub use terms::{HistoryLookup, Term, TermList};
