//! Balancing, inverse probability, ratio and censoring weights.

use crate::error::{Error, Result};
use crate::glm::logistic_fit;
use crate::linalg::Matrix;
use crate::stats::quantile;

/// Fitted probabilities this close to 0 or 1 are treated as positivity violations.
pub const POSITIVITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    Balancing,
    Iptw,
    Ratio,
    Censoring,
    Product,
}

/// Nonnegative per-subject weights plus a short note on how they were built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    kind: WeightKind,
    note: String,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, kind: WeightKind, note: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {}; weights must be finite and nonnegative",
                values[i]
            )));
        }
        Ok(WeightVector {
            values,
            kind,
            note: note.into(),
        })
    }

    pub fn ones(n: usize) -> Self {
        WeightVector {
            values: vec![1.0; n],
            kind: WeightKind::Product,
            note: "unit".into(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn note(&self) -> &str {
        &self.note
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Elementwise product of several weight vectors.
    pub fn product(factors: &[&WeightVector]) -> Result<WeightVector> {
        let n = factors.first().map_or(0, |w| w.len());
        if factors.iter().any(|w| w.len() != n) {
            return Err(Error::Dimension("weight vectors of different lengths".into()));
        }
        let mut values = vec![1.0; n];
        for f in factors {
            for (v, w) in values.iter_mut().zip(&f.values) {
                *v *= w;
            }
        }
        let note = factors.iter().map(|f| f.note.as_str()).collect::<Vec<_>>().join(" x ");
        WeightVector::new(values, WeightKind::Product, note)
    }
}

fn check_pair(a: &[f64], e: &[f64]) -> Result<()> {
    if a.len() != e.len() {
        return Err(Error::Dimension(format!(
            "{} treatments but {} propensities",
            a.len(),
            e.len()
        )));
    }
    if let Some(i) = e.iter().position(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "propensity {i} is {}, outside (0, 1)",
            e[i]
        )));
    }
    Ok(())
}

/// Overlap weights `|a - e|`.
pub fn balancing_weights(a: &[f64], e: &[f64]) -> Result<WeightVector> {
    check_pair(a, e)?;
    let w = a.iter().zip(e).map(|(a, e)| (a - e).abs()).collect();
    WeightVector::new(w, WeightKind::Balancing, "|a - e|")
}

/// `a / e + (1 - a) / (1 - e)`.
pub fn iptw_weights(a: &[f64], e: &[f64]) -> Result<WeightVector> {
    check_pair(a, e)?;
    let w = a.iter().zip(e).map(|(a, e)| a / e + (1.0 - a) / (1.0 - e)).collect();
    WeightVector::new(w, WeightKind::Iptw, "1 / P(a | h)")
}

/// `P(A = a | H*) / P(A = a | H)`.
pub fn ratio_weights(a: &[f64], e_star: &[f64], e_full: &[f64]) -> Result<WeightVector> {
    check_pair(a, e_star)?;
    check_pair(a, e_full)?;
    if let Some(i) = e_full
        .iter()
        .position(|e| *e < POSITIVITY_EPS || *e > 1.0 - POSITIVITY_EPS)
    {
        return Err(Error::Positivity(format!(
            "fitted treatment probability {} for subject {i} is numerically 0 or 1",
            e_full[i]
        )));
    }
    let w = a
        .iter()
        .zip(e_star.iter().zip(e_full))
        .map(|(a, (s, f))| (a * s + (1.0 - a) * (1.0 - s)) / (a * f + (1.0 - a) * (1.0 - f)))
        .collect();
    WeightVector::new(w, WeightKind::Ratio, "P(a | h*) / P(a | h)")
}

/// Caps `values` at the `q` quantile of the entries selected by `mask`.
pub fn truncate_at_quantile(values: &mut [f64], mask: &[bool], q: f64) {
    let pool: Vec<f64> = values.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    if pool.is_empty() {
        return;
    }
    let cap = quantile(&pool, q);
    for v in values.iter_mut() {
        *v = v.min(cap);
    }
}

/// Inverse probability of censoring weights.
///
/// A logistic model for `P(uncensored | z)` is fitted on `design`; uncensored
/// subjects get `1 / p̂`, censored ones 0, and the result is capped at the
/// `truncation_quantile` of the uncensored weights.
pub fn censoring_weights(
    censored: &[bool],
    design: &Matrix,
    truncation_quantile: f64,
) -> Result<WeightVector> {
    if !(truncation_quantile > 0.5 && truncation_quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation quantile {truncation_quantile} outside (0.5, 1]"
        )));
    }
    if censored.len() != design.nrows() {
        return Err(Error::Dimension("censoring indicator and design differ in length".into()));
    }
    if !censored.iter().any(|c| *c) {
        return WeightVector::new(vec![1.0; censored.len()], WeightKind::Censoring, "no censoring");
    }
    let observed: Vec<f64> = censored.iter().map(|c| if *c { 0.0 } else { 1.0 }).collect();
    let fit = logistic_fit(design, &observed, None)?;
    let mut w: Vec<f64> = observed
        .iter()
        .zip(&fit.fitted)
        .map(|(o, p)| if *o == 1.0 { 1.0 / p } else { 0.0 })
        .collect();
    let mask: Vec<bool> = censored.iter().map(|c| !c).collect();
    truncate_at_quantile(&mut w, &mask, truncation_quantile);
    WeightVector::new(
        w,
        WeightKind::Censoring,
        format!("1 / P(uncensored | h), capped at q{truncation_quantile}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn balancing_examples() {
        let w = balancing_weights(&[1.0, 0.0, 1.0], &[0.5, 0.8, 0.999]).unwrap();
        assert!(close(w.values()[0], 0.5));
        assert!(close(w.values()[1], 0.8));
        assert!(close(w.values()[2], 0.001));
        assert!(balancing_weights(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn iptw_examples() {
        let w = iptw_weights(&[1.0, 0.0, 1.0], &[0.5, 0.25, 0.1]).unwrap();
        assert!(close(w.values()[0], 2.0));
        assert!(close(w.values()[1], 4.0 / 3.0));
        assert!(close(w.values()[2], 10.0));
    }

    #[test]
    fn ratio_examples() {
        let w = ratio_weights(&[1.0, 0.0], &[0.6, 0.6], &[0.75, 0.75]).unwrap();
        assert!(close(w.values()[0], 0.8));
        assert!(close(w.values()[1], 1.6));
        let same = ratio_weights(&[1.0, 0.0], &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!(same.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn intercept_only_censoring_model() {
        let n = 10;
        let censored: Vec<bool> = (0..n).map(|i| i < 2).collect();
        let design = Matrix::from_columns(vec!["(Intercept)".into()], vec![vec![1.0; n]]).unwrap();
        let w = censoring_weights(&censored, &design, 0.999).unwrap();
        for (c, v) in censored.iter().zip(w.values()) {
            if *c {
                assert_eq!(*v, 0.0);
            } else {
                assert!((v - 1.25).abs() < 1e-8);
            }
        }
        let none = censoring_weights(&[false; 4], &Matrix::zeros(4, 1), 0.999).unwrap();
        assert_eq!(none.values(), &[1.0; 4]);
    }

    #[test]
    fn truncation_caps_the_outlier() {
        let mut w = vec![1.0; 10];
        w[9] = 1000.0;
        truncate_at_quantile(&mut w, &[true; 10], 0.9);
        // sorted: nine 1s then 1000; h = 9 * 0.9 = 8.1 -> 1 + 0.1 * 999
        assert!((w[9] - 100.9).abs() < 1e-9);
        assert!(w[..9].iter().all(|v| *v == 1.0));
    }
}
