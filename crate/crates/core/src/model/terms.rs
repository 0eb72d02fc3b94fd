use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::dataset::StagedDataset;

/// Anything that can report a subject's value for a named history column.
pub trait HistoryLookup {
    fn value(&self, column: &str) -> Option<f64>;
}

impl HistoryLookup for HashMap<String, f64> {
    fn value(&self, column: &str) -> Option<f64> {
        self.get(column).copied()
    }
}

impl HistoryLookup for BTreeMap<String, f64> {
    fn value(&self, column: &str) -> Option<f64> {
        self.get(column).copied()
    }
}

impl HistoryLookup for BTreeMap<&str, f64> {
    fn value(&self, column: &str) -> Option<f64> {
        self.get(column).copied()
    }
}

impl HistoryLookup for [(&str, f64)] {
    fn value(&self, column: &str) -> Option<f64> {
        self.iter().find(|(k, _)| *k == column).map(|(_, v)| *v)
    }
}

impl<const N: usize> HistoryLookup for [(&str, f64); N] {
    fn value(&self, column: &str) -> Option<f64> {
        self.as_slice().value(column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Main(String),
    Interaction(String, String),
}

impl Term {
    pub fn main(column: impl Into<String>) -> Self {
        Term::Main(column.into())
    }

    pub fn interaction(a: impl Into<String>, b: impl Into<String>) -> Self {
        Term::Interaction(a.into(), b.into())
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Main(c) => vec![c],
            Term::Interaction(a, b) => vec![a, b],
        }
    }

    pub fn evaluate(&self, h: &(impl HistoryLookup + ?Sized)) -> Result<f64> {
        let get = |c: &str| h.value(c).ok_or_else(|| Error::MissingColumn(c.to_string()));
        Ok(match self {
            Term::Intercept => 1.0,
            Term::Main(c) => get(c)?,
            Term::Interaction(a, b) => get(a)? * get(b)?,
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("(Intercept)"),
            Term::Main(c) => f.write_str(c),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    /// `1`, `intercept` or `(Intercept)` for the intercept, `x` for a main
    /// effect and `x:z` for a product.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" || s.eq_ignore_ascii_case("intercept") || s == "(Intercept)" {
            return Ok(Term::Intercept);
        }
        match s.split(':').map(str::trim).collect::<Vec<_>>().as_slice() {
            [c] if !c.is_empty() => Ok(Term::Main(c.to_string())),
            [a, b] if !a.is_empty() && !b.is_empty() => Ok(Term::interaction(*a, *b)),
            _ => Err(Error::Specification(format!("cannot parse term `{s}`"))),
        }
    }
}

/// Ordered list of model terms. The intercept, when present, comes first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TermList(Vec<Term>);

impl TermList {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if let Some(pos) = terms.iter().position(|t| *t == Term::Intercept) {
            if pos != 0 {
                return Err(Error::Specification("the intercept must be the first term".into()));
            }
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Specification(format!("duplicate term `{t}`")));
            }
        }
        Ok(TermList(terms))
    }

    /// Intercept followed by one main effect per column.
    pub fn intercept_and(columns: &[&str]) -> Self {
        let mut t = vec![Term::Intercept];
        t.extend(columns.iter().map(|c| Term::main(*c)));
        TermList(t)
    }

    pub fn parse(specs: &[impl AsRef<str>]) -> Result<Self> {
        Self::new(specs.iter().map(|s| s.as_ref().parse()).collect::<Result<_>>()?)
    }

    pub fn terms(&self) -> &[Term] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_intercept(&self) -> bool {
        self.0.first() == Some(&Term::Intercept)
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(Term::to_string).collect()
    }

    /// Distinct referenced columns in order of first appearance.
    pub fn columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in self.0.iter().flat_map(Term::columns) {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn has_main_effect(&self, column: &str) -> bool {
        self.0.iter().any(|t| matches!(t, Term::Main(c) if c == column))
    }

    /// One design row: 1 for the intercept, the value for a main effect and
    /// the product for an interaction.
    pub fn design_row(&self, h: &(impl HistoryLookup + ?Sized)) -> Result<Vec<f64>> {
        self.0.iter().map(|t| t.evaluate(h)).collect()
    }

    /// Design matrix of every subject at `stage`.
    pub fn design(&self, data: &StagedDataset, stage: usize) -> Result<Matrix> {
        let n = data.n();
        let mut cols = Vec::with_capacity(self.len());
        for t in &self.0 {
            cols.push(match t {
                Term::Intercept => vec![1.0; n],
                Term::Main(c) => data.history_column(c, stage)?.to_vec(),
                Term::Interaction(a, b) => {
                    let (x, z) = (data.history_column(a, stage)?, data.history_column(b, stage)?);
                    x.iter().zip(z).map(|(u, v)| u * v).collect()
                }
            });
        }
        if cols.is_empty() {
            return Ok(Matrix::zeros(n, 0));
        }
        Matrix::from_columns(self.names(), cols)
    }

    pub fn check_available(&self, data: &StagedDataset, stage: usize) -> Result<()> {
        for c in self.columns() {
            data.history_column(c, stage)?;
        }
        Ok(())
    }
}

impl fmt::Display for TermList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.names();
        write!(f, "[{}]", names.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_row_examples() {
        let t = TermList::parse(&["1", "x1"]).unwrap();
        assert_eq!(t.design_row(&[("x1", 3.0)]).unwrap(), vec![1.0, 3.0]);

        let t = TermList::parse(&["1", "x1", "x1:x2"]).unwrap();
        assert_eq!(t.design_row(&[("x1", 2.0), ("x2", 0.5)]).unwrap(), vec![1.0, 2.0, 1.0]);

        let t = TermList::parse(&["x2"]).unwrap();
        assert_eq!(
            t.design_row(&[("x1", 2.0)]).unwrap_err(),
            Error::MissingColumn("x2".into())
        );
    }

    #[test]
    fn intercept_must_lead() {
        assert!(TermList::parse(&["x1", "1"]).is_err());
        assert!(TermList::parse(&["x1", "x1"]).is_err());
        assert!(TermList::parse(&["1", "x1:x2", "x3"]).is_ok());
    }

    #[test]
    fn term_display_round_trips() {
        for s in ["(Intercept)", "x1", "x1:x2"] {
            assert_eq!(s.parse::<Term>().unwrap().to_string(), s);
        }
        assert!("a:b:c".parse::<Term>().is_err());
    }
}
