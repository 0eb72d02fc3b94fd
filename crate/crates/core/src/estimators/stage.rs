//! Single-stage building blocks: weighted least squares and G-estimation
//! fits of a linear blip, plus the tailored (IPTW) variants.

use crate::error::{Error, Result};
use crate::glm::wls_fit_grouped;
use crate::linalg::{Matrix, PivotedQr};
use crate::model::{BlipCoefficients, BlipKind, StagedDataset, TermList};

/// A fitted `f(h; β) + a · z(h) ψ` outcome model.
#[derive(Debug, Clone, PartialEq)]
pub struct BlipFit {
    pub psi: BlipCoefficients,
    pub beta: Vec<f64>,
    pub beta_names: Vec<String>,
}

fn blip_block(data: &StagedDataset, stage: usize, terms: &TermList) -> Result<Matrix> {
    let a = data.treatment(stage);
    let prefix = format!("{}:", data.treatment_name(stage));
    let block = terms.design(data, stage)?.scale_rows(a, &prefix);
    // `a:(Intercept)` reads better as just `a`.
    let names = block
        .names()
        .iter()
        .map(|n| if n.ends_with(":(Intercept)") { data.treatment_name(stage).to_string() } else { n.clone() })
        .collect();
    Ok(block.with_names(names))
}

fn split(
    theta: Vec<f64>,
    p_f: usize,
    stage: usize,
    kind: BlipKind,
    terms: &TermList,
    tf: &TermList,
) -> Result<BlipFit> {
    let (beta, psi) = theta.split_at(p_f);
    Ok(BlipFit {
        psi: BlipCoefficients::new(stage, kind, terms.clone(), psi.to_vec())?,
        beta: beta.to_vec(),
        beta_names: tf.names(),
    })
}

/// Weighted least squares of `pseudo_y` on `[f(h), a · z(h)]`. The blip
/// coefficients are the interaction block.
pub fn dwols_stage(
    data: &StagedDataset,
    stage: usize,
    pseudo_y: &[f64],
    treatment_free: &TermList,
    blip: &TermList,
    weights: &[f64],
    kind: BlipKind,
) -> Result<BlipFit> {
    let f = treatment_free.design(data, stage)?;
    let x = f.hstack(&blip_block(data, stage, blip)?);
    let fit = wls_fit_grouped(&x, pseudo_y, weights, data.row_groups(stage))?;
    split(fit.coefficients, f.ncols(), stage, kind, blip, treatment_free)
}

/// G-estimation with a linear blip and a linear model for `E[G | H]`.
///
/// Solves jointly in `(β, ψ)`
///
/// ```text
/// 0 = Σ u_i f_i (Ỹ_i - f_i β - a_i z_i ψ)
/// 0 = Σ v_i (a_i - e_i) z_i (Ỹ_i - f_i β - a_i z_i ψ)
/// ```
///
/// where `e` is the fitted propensity, `u` weights the treatment-free
/// equations and `v` the blip equations. Rows with `u = v = 0` are skipped.
#[allow(clippy::too_many_arguments)]
pub fn gest_stage(
    data: &StagedDataset,
    stage: usize,
    pseudo_y: &[f64],
    treatment_free: &TermList,
    blip: &TermList,
    propensity: &[f64],
    beta_weights: &[f64],
    psi_weights: &[f64],
    kind: BlipKind,
) -> Result<BlipFit> {
    let n = data.n();
    if propensity.len() != n || beta_weights.len() != n || psi_weights.len() != n || pseudo_y.len() != n {
        return Err(Error::Dimension("G-estimation inputs differ in length".into()));
    }
    let f = treatment_free.design(data, stage)?;
    let z = blip.design(data, stage)?;
    let a = data.treatment(stage);
    let (pf, pz) = (f.ncols(), z.ncols());
    let p = pf + pz;

    // Row-major p × p system M θ = r.
    let mut m = vec![0.0; p * p];
    let mut r = vec![0.0; p];
    let mut inst = vec![0.0; p];
    let mut reg = vec![0.0; p];
    for i in 0..n {
        let (u, v) = (beta_weights[i], psi_weights[i]);
        if u == 0.0 && v == 0.0 {
            continue;
        }
        let y = pseudo_y[i];
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pseudo-outcome is not finite at row {i} which has positive weight"
            )));
        }
        let s = v * (a[i] - propensity[i]);
        for k in 0..pf {
            let fk = f.get(i, k);
            inst[k] = u * fk;
            reg[k] = fk;
        }
        for k in 0..pz {
            let zk = z.get(i, k);
            inst[pf + k] = s * zk;
            reg[pf + k] = a[i] * zk;
        }
        for (row, ik) in inst.iter().enumerate() {
            if *ik == 0.0 {
                continue;
            }
            for (col, rk) in reg.iter().enumerate() {
                m[row * p + col] += ik * rk;
            }
            r[row] += ik * y;
        }
    }

    // Column-major copy for the QR solver.
    let mut raw = vec![0.0; p * p];
    for row in 0..p {
        for col in 0..p {
            raw[col * p + row] = m[row * p + col];
        }
    }
    let qr = PivotedQr::from_raw(p, p, raw);
    let theta = match qr.solve(&r) {
        Some(t) => t,
        None => {
            let mut names = f.names().to_vec();
            names.extend(blip_block(data, stage, blip)?.names().iter().cloned());
            return Err(Error::RankDeficient {
                columns: qr.dependent_columns().into_iter().map(|j| names[j].clone()).collect(),
            });
        }
    };
    split(theta, pf, stage, kind, blip, treatment_free)
}

/// Blip-equation sums `Σ v_i (a_i - e_i) z_i (Ỹ_i - f_i β - a_i z_i ψ)` at a
/// given `(β, ψ)`. Zero at a G-estimation solution.
#[allow(clippy::too_many_arguments)]
pub fn gest_blip_equations(
    data: &StagedDataset,
    stage: usize,
    pseudo_y: &[f64],
    treatment_free: &TermList,
    blip: &TermList,
    propensity: &[f64],
    psi_weights: &[f64],
    beta: &[f64],
    psi: &[f64],
) -> Result<Vec<f64>> {
    let f = treatment_free.design(data, stage)?;
    let z = blip.design(data, stage)?;
    if beta.len() != f.ncols() || psi.len() != z.ncols() {
        return Err(Error::Dimension("coefficients do not match the term lists".into()));
    }
    let a = data.treatment(stage);
    let fb = f.mul_vec(beta);
    let zp = z.mul_vec(psi);
    let mut out = vec![0.0; z.ncols()];
    for i in 0..data.n() {
        let v = psi_weights[i];
        if v == 0.0 {
            continue;
        }
        let g = pseudo_y[i] - fb[i] - a[i] * zp[i];
        let s = v * (a[i] - propensity[i]) * g;
        for (k, o) in out.iter_mut().enumerate() {
            *o += s * z.get(i, k);
        }
    }
    Ok(out)
}
