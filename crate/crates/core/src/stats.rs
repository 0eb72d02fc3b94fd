//! Summary statistics shared by weights, inference and simulation.

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n - 1) q`, the "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Sample covariance matrix (row-major `p × p`) of `rows`, each of length `p`.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; p * p];
    for r in rows {
        for j in 0..p {
            for k in 0..=j {
                cov[j * p + k] += (r[j] - means[j]) * (r[k] - means[k]);
            }
        }
    }
    let d = (n.max(2) - 1) as f64;
    for j in 0..p {
        for k in 0..=j {
            cov[j * p + k] /= d;
            cov[k * p + j] = cov[j * p + k];
        }
    }
    cov
}
