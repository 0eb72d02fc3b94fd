//! Small dense linear algebra: a column-major matrix with named columns,
//! Householder QR with column pivoting and a Cholesky solver.
//!
//! Designs in this crate are tall and thin (thousands of rows, a handful of
//! columns), so everything works on contiguous columns.

use crate::error::{Error, Result};

/// Relative threshold on `|R_kk| / |R_00|` below which a column is treated as
/// linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Column-major dense matrix with one name per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
            names: (0..ncols).map(|j| format!("c{j}")).collect(),
        }
    }

    /// Builds a matrix from named columns of equal length.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let nrows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != nrows) {
            return Err(Error::Dimension(format!(
                "column `{}` has {} rows, expected {nrows}",
                names[bad],
                columns[bad].len()
            )));
        }
        let ncols = columns.len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for c in columns {
            data.extend(c);
        }
        Ok(Matrix {
            nrows,
            ncols,
            data,
            names,
        })
    }

    /// Builds an unnamed matrix from row-major values.
    pub fn from_rows(nrows: usize, ncols: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), nrows * ncols, "row data has the wrong length");
        let mut m = Matrix::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m.data[j * nrows + i] = rows[i * ncols + j];
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.ncols);
        self.names = names;
        self
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    /// `X β`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.ncols);
        let mut out = vec![0.0; self.nrows];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(self.col(j)) {
                    *o += b * x;
                }
            }
        }
        out
    }

    /// Keeps the listed rows, in order (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for j in 0..self.ncols {
            let c = self.col(j);
            data.extend(rows.iter().map(|&i| c[i]));
        }
        Matrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
            names: self.names.clone(),
        }
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.nrows, other.nrows);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Matrix {
            nrows: self.nrows,
            ncols: self.ncols + other.ncols,
            data,
            names,
        }
    }

    /// Multiplies every column elementwise by `v`, renaming columns with `prefix`.
    pub fn scale_rows(&self, v: &[f64], prefix: &str) -> Matrix {
        assert_eq!(v.len(), self.nrows);
        let mut out = self.clone();
        for j in 0..self.ncols {
            for (x, s) in out.col_mut(j).iter_mut().zip(v) {
                *x *= s;
            }
        }
        out.names = self.names.iter().map(|n| format!("{prefix}{n}")).collect();
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR factorization with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    nrows: usize,
    ncols: usize,
    /// Householder vectors below the diagonal and R on/above it (column-major).
    qr: Vec<f64>,
    /// Leading element of each Householder vector.
    v0: Vec<f64>,
    /// `2 / ‖v‖²` for each reflector; zero means identity.
    beta: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &Matrix) -> Self {
        Self::from_raw(a.nrows, a.ncols, a.data.clone())
    }

    pub fn from_raw(nrows: usize, ncols: usize, mut qr: Vec<f64>) -> Self {
        let steps = nrows.min(ncols);
        let mut perm: Vec<usize> = (0..ncols).collect();
        let mut v0 = vec![0.0; steps];
        let mut beta = vec![0.0; steps];
        let mut rank = steps;
        let mut r00 = 0.0f64;

        // Squared norms of the unreduced parts of the columns, downdated after
        // each reflection and recomputed when cancellation eats their accuracy.
        let mut norms: Vec<f64> = (0..ncols).map(|j| dot(&qr[j * nrows..(j + 1) * nrows], &qr[j * nrows..(j + 1) * nrows])).collect();
        let mut exact = norms.clone();

        for k in 0..steps {
            let mut best = k;
            for j in k + 1..ncols {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if best != k {
                for i in 0..nrows {
                    qr.swap(k * nrows + i, best * nrows + i);
                }
                perm.swap(k, best);
                norms.swap(k, best);
                exact.swap(k, best);
            }
            let c = &qr[k * nrows + k..(k + 1) * nrows];
            let best_norm = dot(c, c);
            let norm = best_norm.max(0.0).sqrt();
            if k == 0 {
                r00 = norm;
            }
            if norm == 0.0 || norm <= RANK_TOLERANCE * r00 {
                rank = k;
                break;
            }

            let x0 = qr[k * nrows + k];
            let alpha = if x0 > 0.0 { -norm } else { norm };
            let lead = x0 - alpha;
            // ‖v‖² = ‖x‖² - x0² + (x0 - alpha)²
            let vnorm2 = best_norm - x0 * x0 + lead * lead;
            let b = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            v0[k] = lead;
            beta[k] = b;
            qr[k * nrows + k] = alpha;

            if b != 0.0 {
                let (head, tail) = qr.split_at_mut((k + 1) * nrows);
                let v = &head[k * nrows + k + 1..(k + 1) * nrows];
                for j in (k + 1)..ncols {
                    let col = &mut tail[(j - k - 1) * nrows + k..(j - k) * nrows];
                    let s = b * (lead * col[0] + dot(v, &col[1..]));
                    col[0] -= s * lead;
                    for (c, vi) in col[1..].iter_mut().zip(v) {
                        *c -= s * vi;
                    }
                    norms[j] -= col[0] * col[0];
                    if norms[j] <= 1e-8 * exact[j] {
                        norms[j] = dot(&col[1..], &col[1..]);
                        exact[j] = norms[j];
                    }
                }
            }
        }

        PivotedQr {
            nrows,
            ncols,
            qr,
            v0,
            beta,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols
    }

    /// Original indices of the columns pivoted past the numerical rank.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Applies `Qᵀ` to `y` in place.
    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.nrows;
        for k in 0..self.rank {
            let b = self.beta[k];
            if b == 0.0 {
                continue;
            }
            let v = &self.qr[k * n + k + 1..(k + 1) * n];
            let lead = self.v0[k];
            let s = b * (lead * y[k] + dot(v, &y[k + 1..]));
            y[k] -= s * lead;
            for (yi, vi) in y[k + 1..].iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    /// Least-squares solution of `A x ≈ y`; requires full column rank.
    pub fn solve(&self, y: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(y.len(), self.nrows);
        if !self.is_full_rank() {
            return None;
        }
        let n = self.nrows;
        let p = self.ncols;
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        let mut x = vec![0.0; p];
        for k in (0..p).rev() {
            let mut s = z[k];
            for j in (k + 1)..p {
                s -= self.qr[j * n + k] * x[j];
            }
            x[k] = s / self.qr[k * n + k];
        }
        let mut out = vec![0.0; p];
        for (k, &orig) in self.perm.iter().enumerate() {
            out[orig] = x[k];
        }
        Some(out)
    }
}

/// Rank error naming the dependent columns of `a` per `qr`.
pub(crate) fn rank_error(a: &Matrix, qr: &PivotedQr) -> Error {
    Error::RankDeficient {
        columns: qr
            .dependent_columns()
            .into_iter()
            .map(|j| a.names()[j].clone())
            .collect(),
    }
}

/// Solves the symmetric positive definite system `A x = b` (row-major `p × p`)
/// by Cholesky decomposition. Returns `None` if `A` is not numerically positive
/// definite.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let p = b.len();
    assert_eq!(a.len(), p * p);
    let mut l = vec![0.0; p * p];
    let max_diag = (0..p).map(|i| a[i * p + i]).fold(0.0f64, f64::max);
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= RANK_TOLERANCE * max_diag || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}
