use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{canonical_labels, ClusterError};
use crate::metrics::{rows_of, squared_euclidean};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Lloyd stops once the relative distortion change drops below this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster ids renamed in order of first appearance.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids.
    pub distortion: f64,
}

/// Best-of-restarts Lloyd K-means over the rows of `points`.
///
/// Every restart seeds with D²-weighted sampling. An emptied cluster is
/// re-seeded at the point farthest from its centroid, so each of the `k`
/// ids stays occupied whenever `k <= n`.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<KMeansResult, ClusterError> {
    let rows = rows_of(points);
    kmeans_rows(&rows, k, seed, cfg)
}

pub(crate) fn kmeans_rows(
    rows: &[Vec<f64>],
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<KMeansResult, ClusterError> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidClusterCount { k, n });
    }
    let pts = Flat::new(rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = Workspace::new(n, k, pts.dim);
    let mut best: Option<Run> = None;
    for _ in 0..cfg.restarts.max(1) {
        let centroids = seed_centroids(&pts, k, &mut rng);
        let run = lloyd(&pts, centroids, cfg, &mut ws);
        if best.as_ref().is_none_or(|b| run.distortion < b.distortion) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let (labels, _) = canonical_labels(&best.labels);
    let mut order = vec![usize::MAX; k];
    for (old, new) in best.labels.iter().zip(&labels) {
        order[*new] = *old;
    }
    let dim = pts.dim;
    Ok(KMeansResult {
        labels,
        centroids: order
            .iter()
            .map(|&old| best.centroids[old * dim..(old + 1) * dim].to_vec())
            .collect(),
        distortion: best.distortion,
    })
}

/// Row-major copy of the points.
struct Flat {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Flat {
    fn new(rows: &[Vec<f64>]) -> Self {
        Self {
            data: rows.concat(),
            n: rows.len(),
            dim: rows[0].len(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    distortion: f64,
}

/// Scratch buffers reused across restarts.
struct Workspace {
    dists: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl Workspace {
    fn new(n: usize, k: usize, dim: usize) -> Self {
        Self {
            dists: vec![0.0; n],
            sums: vec![0.0; k * dim],
            counts: vec![0; k],
        }
    }
}

fn seed_centroids(pts: &Flat, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = pts.n;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_euclidean(pts.row(i), pts.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // All remaining points coincide with a centroid.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(pts.row(i), pts.row(next)));
        }
    }
    chosen.iter().flat_map(|&i| pts.row(i).iter().copied()).collect()
}

fn nearest(row: &[f64], centroids: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(row.len()).enumerate() {
        let d = squared_euclidean(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn total_distortion(pts: &Flat, labels: &[usize], centroids: &[f64]) -> f64 {
    let dim = pts.dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_euclidean(pts.row(i), &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

fn lloyd(pts: &Flat, mut centroids: Vec<f64>, cfg: &KMeansConfig, ws: &mut Workspace) -> Run {
    let dim = pts.dim;
    let k = centroids.len() / dim;
    let mut labels = vec![0; pts.n];
    let mut previous = f64::INFINITY;
    let mut distortion = f64::INFINITY;
    for _ in 0..cfg.max_iter.max(1) {
        for (i, label) in labels.iter_mut().enumerate() {
            let (c, d) = nearest(pts.row(i), &centroids);
            *label = c;
            ws.dists[i] = d;
        }
        fill_empty_clusters(&mut labels, &mut ws.dists, &mut centroids, pts);

        ws.sums.fill(0.0);
        ws.counts.fill(0);
        for (i, &c) in labels.iter().enumerate() {
            ws.counts[c] += 1;
            for (s, v) in ws.sums[c * dim..(c + 1) * dim].iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if ws.counts[c] > 0 {
                let count = ws.counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&ws.sums[c * dim..]) {
                    *dst = s / count;
                }
            }
        }
        distortion = total_distortion(pts, &labels, &centroids);
        if distortion == 0.0 || (previous - distortion).abs() <= cfg.tolerance * previous {
            break;
        }
        previous = distortion;
    }
    // Final assignment consistent with the returned centroids.
    for (i, label) in labels.iter_mut().enumerate() {
        *label = nearest(pts.row(i), &centroids).0;
    }
    fill_empty_clusters(&mut labels, &mut ws.dists, &mut centroids, pts);
    let distortion_final = total_distortion(pts, &labels, &centroids);
    Run {
        labels,
        centroids,
        distortion: distortion_final.min(distortion),
    }
}

/// Moves the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn fill_empty_clusters(labels: &mut [usize], dists: &mut [f64], centroids: &mut [f64], pts: &Flat) {
    let dim = pts.dim;
    let k = centroids.len() / dim;
    loop {
        let mut counts = vec![0usize; k];
        for &c in labels.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        for (i, d) in dists.iter_mut().enumerate() {
            *d = squared_euclidean(pts.row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]);
        }
        let donor = (0..pts.n)
            .filter(|&i| counts[labels[i]] > 1)
            .reduce(|a, b| if dists[b] > dists[a] { b } else { a })
            .expect("k <= n leaves a multi-member cluster");
        labels[donor] = empty;
        dists[donor] = 0.0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(pts.row(donor));
    }
}

/// K at the sharpest bend of a distortion curve.
///
/// `distortions[i]` is the distortion for `K = i + 1`. Returns the interior K
/// with the largest positive second difference, the smaller K on ties and
/// K = 2 when no second difference is positive.
pub fn elbow_k(distortions: &[f64]) -> Result<usize, ClusterError> {
    if distortions.len() < 3 {
        return Err(ClusterError::ShortDistortionCurve(distortions.len()));
    }
    let mut best = (2, 0.0);
    for k in 2..distortions.len() {
        let second = distortions[k - 2] - 2.0 * distortions[k - 1] + distortions[k];
        if second > best.1 {
            best = (k, second);
        }
    }
    Ok(best.0)
}

/// Plain K-means on the points with K picked by the elbow rule over `1..=k_max`.
pub fn kmeans_elbow(
    points: &DMatrix<f64>,
    k_max: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<(KMeansResult, Vec<f64>), ClusterError> {
    let n = points.nrows();
    let k_max = k_max.min(n);
    let rows = rows_of(points);
    let mut curve = Vec::with_capacity(k_max);
    let mut runs = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let run = kmeans_rows(&rows, k, seed, cfg)?;
        curve.push(run.distortion);
        runs.push(run);
    }
    let k = elbow_k(&curve)?;
    Ok((runs.swap_remove(k - 1), curve))
}
