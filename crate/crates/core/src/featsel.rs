//! Silhouette-driven feature subset selection.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcluster::{canonical_labels, GraphConfig};
use crate::metrics::{euclidean, rows_of, zscore_columns};

#[derive(Debug, Error, PartialEq)]
pub enum FeatselError {
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("labels cover {labels} points but there are {n}")]
    LabelMismatch { labels: usize, n: usize },
    #[error("feature selection needs at least 4 samples, got {0}")]
    InsufficientData(usize),
    #[error("{names} feature names for {columns} columns")]
    NameMismatch { names: usize, columns: usize },
    #[error("subset size {size} is outside 1..={columns}")]
    InvalidSize { size: usize, columns: usize },
    #[error("no feature subset produced a clustering")]
    NoScores,
}

/// Per-point silhouette values and their mean.
///
/// `x(i)` is the mean distance from `i` to the other members of its cluster,
/// `y(i)` the smallest mean distance to another cluster, and
/// `s(i) = (y − x) / max(x, y)`. Members of singleton clusters score 0, as do
/// points with `x = y = 0`.
pub fn silhouette(points: &DMatrix<f64>, labels: &[usize]) -> Result<(Vec<f64>, f64), FeatselError> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(FeatselError::LabelMismatch {
            labels: labels.len(),
            n,
        });
    }
    let (labels, k) = canonical_labels(labels);
    if k < 2 {
        return Err(FeatselError::SingleCluster);
    }
    let rows = rows_of(points);
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut per_point = Vec::with_capacity(n);
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.fill(0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += euclidean(&rows[i], &rows[j]);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            per_point.push(0.0);
            continue;
        }
        let x = sums[own] / (sizes[own] - 1) as f64;
        let y = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = x.max(y);
        per_point.push(if denom > 0.0 { (y - x) / denom } else { 0.0 });
    }
    let mean = per_point.iter().sum::<f64>() / n as f64;
    Ok((per_point, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    /// Feature names in column order.
    pub features: Vec<String>,
    pub k_used: usize,
    pub mean_silhouette: f64,
}

/// All `size`-element index combinations of `0..n` in lexicographic order.
pub fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size == 0 || size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.clone());
        let mut i = size;
        while i > 0 && idx[i - 1] == n - size + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn score_subset(z: &DMatrix<f64>, cols: &[usize], cfg: &GraphConfig, seed: u64) -> Option<(usize, f64)> {
    let sub = z.select_columns(cols);
    let (_, sweep) = cfg.sweep(&sub, seed).ok()?;
    let (_, mean) = silhouette(&sub, &sweep.best.labels).ok()?;
    Some((sweep.k_opt, mean))
}

/// Ranks every feature subset with a size in `sizes` by the mean silhouette
/// of its modularity-optimal spectral clustering.
///
/// Columns are z-scored first (`NaN` entries imputed as 0 afterwards). Each
/// subset is clustered and scored in its own subspace. Output is sorted by
/// descending silhouette, ties broken by the feature-name list.
pub fn select_subset(
    data: &DMatrix<f64>,
    names: &[&str],
    sizes: RangeInclusive<usize>,
    cfg: &GraphConfig,
    seed: u64,
) -> Result<Vec<SubsetScore>, FeatselError> {
    let (n, d) = data.shape();
    if names.len() != d {
        return Err(FeatselError::NameMismatch {
            names: names.len(),
            columns: d,
        });
    }
    if n < 4 {
        return Err(FeatselError::InsufficientData(n));
    }
    for size in [*sizes.start(), *sizes.end()] {
        if size == 0 || size > d {
            return Err(FeatselError::InvalidSize { size, columns: d });
        }
    }
    let z = zscore_columns(data);
    let subsets: Vec<Vec<usize>> = sizes.flat_map(|s| combinations(d, s)).collect();

    let evaluate = |cols: &Vec<usize>| {
        score_subset(&z, cols, cfg, seed).map(|(k_used, mean_silhouette)| SubsetScore {
            features: cols.iter().map(|&c| names[c].to_string()).collect(),
            k_used,
            mean_silhouette,
        })
    };
    #[cfg(feature = "parallel")]
    let scored: Vec<Option<SubsetScore>> = {
        use rayon::prelude::*;
        subsets.par_iter().map(evaluate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scored: Vec<Option<SubsetScore>> = subsets.iter().map(evaluate).collect();

    let mut scores: Vec<SubsetScore> = scored.into_iter().flatten().collect();
    if scores.is_empty() {
        return Err(FeatselError::NoScores);
    }
    scores.sort_by(|a, b| {
        b.mean_silhouette
            .total_cmp(&a.mean_silhouette)
            .then_with(|| a.features.cmp(&b.features))
    });
    Ok(scores)
}

pub fn write_subset_scores(scores: &[SubsetScore]) -> Vec<u8> {
    let mut out = String::from("rank,features,k,mean_silhouette\n");
    for (rank, s) in scores.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rank + 1,
            s.features.join(";"),
            s.k_used,
            s.mean_silhouette
        ));
    }
    out.into_bytes()
}

pub fn parse_subset_scores(bytes: &[u8]) -> Result<Vec<SubsetScore>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some("rank,features,k,mean_silhouette") {
        return Err("subset_scores.csv: unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("subset_scores.csv: line {}: malformed row", i + 2);
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(SubsetScore {
                features: f[1].split(';').map(String::from).collect(),
                k_used: f[2].parse().map_err(|_| bad())?,
                mean_silhouette: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
