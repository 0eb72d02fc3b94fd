//! Weighted least squares and weighted logistic regression.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, rank_error, Matrix, PivotedQr};

/// Coefficients beyond this magnitude are taken as a sign of separation.
pub const SEPARATION_THRESHOLD: f64 = 15.0;
pub const MAX_IRLS_ITERATIONS: usize = 100;
const SCORE_TOLERANCE: f64 = 1e-9;
const DEVIANCE_TOLERANCE: f64 = 1e-10;
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    pub coefficients: Vec<f64>,
    /// `y - Z β̂` for every row (unweighted).
    pub residuals: Vec<f64>,
    pub column_names: Vec<String>,
    pub rank: usize,
}

impl WlsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "weight {i} is {} (weights must be finite and nonnegative)",
            weights[i]
        ))),
        None => Ok(()),
    }
}

/// Minimizes `Σ w_i (y_i - z_i β)²` through a pivoted QR of `√W Z`.
///
/// Rows with zero weight do not enter the fit, so their response may be
/// missing (NaN); their residual is still reported.
pub fn wls_fit(design: &Matrix, y: &[f64], weights: &[f64]) -> Result<WlsFit> {
    wls_fit_grouped(design, y, weights, &RowGroups::of_design(design))
}

/// [`wls_fit`] for a design whose rows are constant within each of `groups`.
pub fn wls_fit_grouped(design: &Matrix, y: &[f64], weights: &[f64], groups: &RowGroups) -> Result<WlsFit> {
    let n = design.nrows();
    let p = design.ncols();
    if y.len() != n || weights.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows, response {} and weights {}",
            y.len(),
            weights.len()
        )));
    }
    check_groups(groups, n)?;
    check_weights(weights)?;
    let mut active = 0;
    for i in 0..n {
        if weights[i] > 0.0 {
            if !y[i].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "response is not finite at row {i} which has positive weight"
                )));
            }
            active += 1;
        }
    }
    if active < p {
        return Err(Error::InvalidArgument(format!(
            "{active} rows with positive weight for {p} coefficients"
        )));
    }

    let red = reduce(groups, weights);
    let m = red.rows.len();
    let mut yw = vec![0.0; m];
    for i in 0..n {
        if weights[i] > 0.0 {
            yw[red.slot[groups.group_of(i)]] += weights[i] * y[i];
        }
    }
    // √W_g times the group's weighted mean response
    for (v, w) in yw.iter_mut().zip(&red.w) {
        *v /= w.sqrt();
    }
    let mut raw = Vec::with_capacity(m * p);
    for j in 0..p {
        let c = design.col(j);
        raw.extend(red.rows.iter().zip(&red.w).map(|(&i, w)| c[i] * w.sqrt()));
    }
    let qr = PivotedQr::from_raw(m, p, raw);
    let coefficients = match qr.solve(&yw) {
        Some(b) => b,
        None => return Err(rank_error(design, &qr)),
    };
    let fitted = design.mul_vec(&coefficients);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(WlsFit {
        coefficients,
        residuals,
        column_names: design.names().to_vec(),
        rank: qr.rank(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Fitted `P(a = 1 | z)`, strictly inside (0, 1).
    pub fitted: Vec<f64>,
    pub column_names: Vec<String>,
}

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn deviance(a: &[f64], eta: &[f64], w: &[f64]) -> f64 {
    let mut d = 0.0;
    for ((ai, e), wi) in a.iter().zip(eta).zip(w) {
        if *wi == 0.0 {
            continue;
        }
        let p = expit(*e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        d -= wi * (ai * p.ln() + (1.0 - ai) * (1.0 - p).ln());
    }
    2.0 * d
}

/// A partition of rows into groups of identical rows.
///
/// Fits only see a group through its total weight (and, for least squares,
/// its weighted mean response), so bootstrap resamples and discrete
/// covariates shrink to a handful of rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowGroups {
    group: Vec<u32>,
    first: Vec<usize>,
}

impl RowGroups {
    /// Groups rows that agree bitwise in every column.
    pub fn from_columns(columns: &[&[f64]], n: usize) -> Self {
        let seed = 0x9e37_79b9_7f4a_7c15u64;
        let mut hash = vec![seed; n];
        for c in columns {
            assert_eq!(c.len(), n, "grouping columns differ in length");
            for (h, x) in hash.iter_mut().zip(c.iter()) {
                let v = (*h ^ x.to_bits()).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                *h = v ^ (v >> 29);
            }
        }
        let same = |i: usize, k: usize| columns.iter().all(|c| c[i].to_bits() == c[k].to_bits());
        let mask = (2 * n).next_power_of_two() - 1;
        let mut table = vec![u32::MAX; mask + 1];
        let mut first: Vec<usize> = Vec::new();
        let mut group = vec![0u32; n];
        for i in 0..n {
            let mut slot = (hash[i] as usize) & mask;
            loop {
                let g = table[slot];
                if g == u32::MAX {
                    table[slot] = first.len() as u32;
                    group[i] = first.len() as u32;
                    first.push(i);
                    break;
                }
                let r = first[g as usize];
                if hash[r] == hash[i] && same(r, i) {
                    group[i] = g;
                    break;
                }
                slot = (slot + 1) & mask;
            }
        }
        RowGroups { group, first }
    }

    /// Grouping of the rows `rows` (duplicates allowed) of the grouped data.
    pub fn pick(&self, rows: &[usize]) -> Self {
        let mut renumber = vec![u32::MAX; self.first.len()];
        let mut first = Vec::new();
        let group = rows
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let g = &mut renumber[self.group[old] as usize];
                if *g == u32::MAX {
                    *g = first.len() as u32;
                    first.push(new);
                }
                *g
            })
            .collect();
        RowGroups { group, first }
    }

    /// Groups the rows of a design matrix.
    pub fn of_design(design: &Matrix) -> Self {
        let cols: Vec<&[f64]> = (0..design.ncols()).map(|j| design.col(j)).collect();
        Self::from_columns(&cols, design.nrows())
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.group.len()
    }

    /// Number of groups.
    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn group_of(&self, row: usize) -> usize {
        self.group[row] as usize
    }

    /// First row of each group, in row order.
    pub fn representatives(&self) -> &[usize] {
        &self.first
    }
}

/// Groups with positive total weight: their representative rows, weights,
/// and the position of every group among them (`usize::MAX` if dropped).
struct Reduced {
    rows: Vec<usize>,
    w: Vec<f64>,
    slot: Vec<usize>,
}

fn reduce(groups: &RowGroups, w: &[f64]) -> Reduced {
    let mut total = vec![0.0; groups.len()];
    for (i, wi) in w.iter().enumerate() {
        total[groups.group_of(i)] += wi;
    }
    let mut slot = vec![usize::MAX; groups.len()];
    let mut rows = Vec::new();
    let mut kept = Vec::new();
    for (g, t) in total.iter().enumerate() {
        if *t > 0.0 {
            slot[g] = rows.len();
            rows.push(groups.first[g]);
            kept.push(*t);
        }
    }
    Reduced { rows, w: kept, slot }
}

fn check_groups(groups: &RowGroups, n: usize) -> Result<()> {
    if groups.n() != n {
        return Err(Error::Dimension(format!(
            "row grouping covers {} rows, the design has {n}",
            groups.n()
        )));
    }
    Ok(())
}

/// Maximum likelihood logistic regression by Newton / IRLS iterations.
pub fn logistic_fit(design: &Matrix, a: &[f64], weights: Option<&[f64]>) -> Result<LogisticFit> {
    let n = design.nrows();
    if a.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows but the binary response has {}",
            a.len()
        )));
    }
    let mut cols: Vec<&[f64]> = (0..design.ncols()).map(|j| design.col(j)).collect();
    cols.push(a);
    logistic_fit_grouped(design, a, weights, &RowGroups::from_columns(&cols, n))
}

/// [`logistic_fit`] for a design and response that are constant within each
/// of `groups`.
pub fn logistic_fit_grouped(
    design: &Matrix,
    a: &[f64],
    weights: Option<&[f64]>,
    groups: &RowGroups,
) -> Result<LogisticFit> {
    let n = design.nrows();
    let p = design.ncols();
    if a.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows but the binary response has {}",
            a.len()
        )));
    }
    if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!(
            "response {i} is {}, expected 0 or 1",
            a[i]
        )));
    }
    let unit;
    let w: &[f64] = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension("weights length differs from design".into()));
            }
            check_weights(w)?;
            w
        }
        None => {
            unit = vec![1.0; n];
            &unit
        }
    };
    let total_weight: f64 = w.iter().sum();
    if n < p || total_weight <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{n} rows for {p} coefficients"
        )));
    }

    check_groups(groups, n)?;
    if let Some(i) = (0..n).find(|&i| a[i] != a[groups.first[groups.group_of(i)]]) {
        return Err(Error::InvalidArgument(format!(
            "row grouping mixes both responses (row {i})"
        )));
    }
    let red = reduce(groups, w);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c = design.col(j);
            red.rows.iter().map(|&i| c[i]).collect()
        })
        .collect();
    let a: Vec<f64> = red.rows.iter().map(|&i| a[i]).collect();
    let slot: Vec<usize> = (0..n).map(|i| red.slot[groups.group_of(i)]).collect();
    let w = red.w;
    let m = a.len();
    {
        let mut raw = Vec::with_capacity(m * p);
        for c in &cols {
            raw.extend(c.iter().zip(&w).map(|(x, wi)| x * wi.sqrt()));
        }
        let qr = PivotedQr::from_raw(m, p, raw);
        if !qr.is_full_rank() {
            return Err(rank_error(design, &qr));
        }
    }
    let linear = |beta: &[f64], eta: &mut [f64]| {
        eta.fill(0.0);
        for (c, b) in cols.iter().zip(beta) {
            for (e, x) in eta.iter_mut().zip(c) {
                *e += x * b;
            }
        }
    };

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; m];
    let mut dev = deviance(&a, &eta, &w);
    let mut converged = false;
    let mut iterations = 0;
    let mut resid = vec![0.0; m];
    let mut work = vec![0.0; m];
    let mut info = vec![0.0; p * p];
    let mut score = vec![0.0; p];
    let mut new_beta = vec![0.0; p];

    while iterations < MAX_IRLS_ITERATIONS {
        for i in 0..m {
            let pi = expit(eta[i]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            resid[i] = w[i] * (a[i] - pi);
            work[i] = w[i] * pi * (1.0 - pi);
        }
        for j in 0..p {
            score[j] = dot(&cols[j], &resid);
        }
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_score / total_weight <= SCORE_TOLERANCE {
            converged = true;
            break;
        }
        for j in 0..p {
            for k in 0..=j {
                let s: f64 = work.iter().zip(&cols[j]).zip(&cols[k]).map(|((v, x), z)| v * x * z).sum();
                info[j * p + k] = s;
                info[k * p + j] = s;
            }
        }
        let step = cholesky_solve(&info, &score).ok_or_else(|| Error::Separation {
            detail: format!("information matrix became singular at iteration {iterations}"),
        })?;
        iterations += 1;

        // Newton step with halving if the deviance goes up.
        let mut scale = 1.0;
        let mut new_dev;
        loop {
            for j in 0..p {
                new_beta[j] = beta[j] + scale * step[j];
            }
            linear(&new_beta, &mut eta);
            new_dev = deviance(&a, &eta, &w);
            if new_dev <= dev * (1.0 + 1e-12) + 1e-12 || scale < 1e-4 {
                break;
            }
            scale *= 0.5;
        }
        beta.copy_from_slice(&new_beta);
        if let Some(j) = beta.iter().position(|b| b.abs() > SEPARATION_THRESHOLD) {
            return Err(Error::Separation {
                detail: format!(
                    "coefficient `{}` reached {:.3} after {iterations} iterations",
                    design.names()[j],
                    beta[j]
                ),
            });
        }
        let rel = (dev - new_dev).abs() / (new_dev.abs() + 0.1);
        dev = new_dev;
        if rel <= DEVIANCE_TOLERANCE && scale == 1.0 {
            // One more full step was just taken; the score is now at rounding level.
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::Separation {
            detail: format!("IRLS did not converge in {MAX_IRLS_ITERATIONS} iterations"),
        });
    }
    linear(&beta, &mut eta);
    let group_fitted: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let fitted: Vec<f64> = slot
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if g == usize::MAX {
                expit((0..p).map(|j| design.get(i, j) * beta[j]).sum())
            } else {
                group_fitted[g]
            }
        })
        .collect();
    if let Some(i) = fitted.iter().position(|&q| q <= 0.0 || q >= 1.0) {
        return Err(Error::Positivity(format!(
            "fitted probability at row {i} is numerically {}",
            fitted[i]
        )));
    }
    Ok(LogisticFit {
        coefficients: beta,
        converged,
        iterations,
        fitted,
        column_names: design.names().to_vec(),
    })
}
