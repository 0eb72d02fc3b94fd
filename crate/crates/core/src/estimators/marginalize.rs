//! Turning a full-history blip `γ†` into a tailored blip `γ*` by averaging
//! over the non-tailoring covariates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::glm::{wls_fit, wls_fit_grouped};
use crate::linalg::Matrix;
use crate::model::{BlipCoefficients, BlipKind, StageSpec, StagedDataset};

/// Default cap on the number of distinct values a column may take before the
/// empirical-density route refuses it as continuous.
pub const DEFAULT_MAX_LEVELS: usize = 50;

fn levels(values: &[f64], name: &str, max_levels: usize) -> Result<Vec<f64>> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() > max_levels {
        return Err(Error::Unsupported(format!(
            "column `{name}` takes {} distinct values; averaging over the empirical \
             distribution needs discrete columns (at most {max_levels} levels)",
            v.len()
        )));
    }
    Ok(v)
}

/// One tailoring cell: its coordinates, mean of `γ†(1, h)` and subject count.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub values: Vec<f64>,
    pub mean_contrast: f64,
    pub count: usize,
}

/// Cell means `Σ_{h^c} γ†(1, h*, h^c) f̂(h^c | h*)` over the Cartesian product
/// of the observed levels of the tailoring columns.
pub fn tailoring_cells(
    psi_dagger: &BlipCoefficients,
    spec: &StageSpec,
    data: &StagedDataset,
    stage: usize,
    max_levels: usize,
) -> Result<Vec<Cell>> {
    let n = data.n();
    for c in spec.nontailoring_blip_columns() {
        levels(data.history_column(c, stage)?, c, max_levels)?;
    }
    let cols: Vec<&[f64]> = spec
        .tailoring_columns
        .iter()
        .map(|c| data.history_column(c, stage))
        .collect::<Result<_>>()?;
    let lv: Vec<Vec<f64>> = cols
        .iter()
        .zip(&spec.tailoring_columns)
        .map(|(v, name)| levels(v, name, max_levels))
        .collect::<Result<_>>()?;

    let q = psi_dagger.contrasts(data, stage)?;
    // Sum and count per observed cell, keyed by level indices.
    let mut acc: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
    for i in 0..n {
        let key: Vec<usize> = cols
            .iter()
            .zip(&lv)
            .map(|(c, l)| l.binary_search_by(|x| x.total_cmp(&c[i])).expect("observed level"))
            .collect();
        let e = acc.entry(key).or_insert((0.0, 0));
        e.0 += q[i];
        e.1 += 1;
    }

    let total: usize = lv.iter().map(Vec::len).product();
    let mut cells = Vec::with_capacity(total);
    let mut idx = vec![0usize; lv.len()];
    for _ in 0..total {
        let values: Vec<f64> = idx.iter().zip(&lv).map(|(&k, l)| l[k]).collect();
        match acc.get(&idx) {
            Some(&(s, c)) => cells.push(Cell {
                values,
                mean_contrast: s / c as f64,
                count: c,
            }),
            None => {
                let desc: Vec<String> = spec
                    .tailoring_columns
                    .iter()
                    .zip(&values)
                    .map(|(n, v)| format!("{n}={v}"))
                    .collect();
                return Err(Error::EmptyCell(format!("({}) has no subjects", desc.join(", "))));
            }
        }
        // odometer increment, last column fastest
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < lv[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(cells)
}

/// A blip already written in the tailoring terms marginalizes to itself.
fn unchanged(psi_dagger: &BlipCoefficients, spec: &StageSpec) -> Option<BlipCoefficients> {
    (psi_dagger.terms() == &spec.tailoring_terms).then(|| psi_dagger.with_kind(BlipKind::Pats))
}

/// Averages `γ†` over the empirical distribution of the non-tailoring
/// covariates within each tailoring cell, then expresses the cell values in
/// the tailoring basis (exactly when it saturates the cells, by
/// count-weighted least squares otherwise).
pub fn integrate_marginalize(
    psi_dagger: &BlipCoefficients,
    spec: &StageSpec,
    data: &StagedDataset,
    stage: usize,
    max_levels: usize,
) -> Result<BlipCoefficients> {
    if let Some(same) = unchanged(psi_dagger, spec) {
        return Ok(same);
    }
    let cells = tailoring_cells(psi_dagger, spec, data, stage, max_levels)?;
    let terms = &spec.tailoring_terms;
    let mut rows = Vec::with_capacity(cells.len() * terms.len());
    for cell in &cells {
        let h: Vec<(&str, f64)> = spec
            .tailoring_columns
            .iter()
            .map(String::as_str)
            .zip(cell.values.iter().copied())
            .collect();
        rows.extend(terms.design_row(h.as_slice())?);
    }
    let design = Matrix::from_rows(cells.len(), terms.len(), &rows).with_names(terms.names());
    let y: Vec<f64> = cells.iter().map(|c| c.mean_contrast).collect();
    let w: Vec<f64> = cells.iter().map(|c| c.count as f64).collect();
    let fit = wls_fit(&design, &y, &w)?;
    BlipCoefficients::new(stage, BlipKind::Pats, terms.clone(), fit.coefficients)
}

/// Unweighted least squares of `Q_i = γ†(1, h_i)` on the tailoring terms.
pub fn ce_marginalize(
    psi_dagger: &BlipCoefficients,
    spec: &StageSpec,
    data: &StagedDataset,
    stage: usize,
) -> Result<BlipCoefficients> {
    if let Some(same) = unchanged(psi_dagger, spec) {
        return Ok(same);
    }
    let q = psi_dagger.contrasts(data, stage)?;
    let design = spec.tailoring_terms.design(data, stage)?;
    let fit = wls_fit_grouped(&design, &q, &vec![1.0; data.n()], data.row_groups(stage))?;
    BlipCoefficients::new(stage, BlipKind::Pats, spec.tailoring_terms.clone(), fit.coefficients)
}
