//! Small statistics helpers and partition agreement.

use std::collections::HashMap;

use nalgebra::DMatrix;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs`; 0 when `xs` has no spread.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Copies the rows of a matrix into owned vectors.
pub fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows())
        .map(|i| points.row(i).iter().copied().collect())
        .collect()
}

/// Column-wise z-scores with population standard deviation.
///
/// Columns with zero spread become all zeros. `NaN` entries are treated as
/// missing: they are excluded from the column statistics and imputed as 0
/// (the column mean) in the standardized output.
pub fn zscore_columns(data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for j in 0..data.ncols() {
        let present: Vec<f64> = data.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
        let (m, s) = if present.is_empty() {
            (0.0, 0.0)
        } else {
            (mean(&present), std_pop(&present))
        };
        for i in 0..data.nrows() {
            let v = data[(i, j)];
            out[(i, j)] = if v.is_nan() || s <= 1e-12 * (1.0 + m.abs()) {
                0.0
            } else {
                (v - m) / s
            };
        }
    }
    out
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1.0 when both labelings are a single cluster (or identical trivial
/// partitions), where the chance correction is undefined.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}
