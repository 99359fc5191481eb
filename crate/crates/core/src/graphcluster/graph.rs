use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::metrics::{euclidean, rows_of};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Binary,
    /// `exp(-d² / 2σ²)` with σ the median pairwise distance.
    Gaussian,
}

/// Undirected weighted graph stored as a dense symmetric adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    adjacency: DMatrix<f64>,
    degrees: Vec<f64>,
    total_weight: f64,
}

impl AffinityGraph {
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self, ClusterError> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(ClusterError::InvalidAdjacency);
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(ClusterError::InvalidAdjacency);
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !(w >= 0.0) || w != adjacency[(j, i)] {
                    return Err(ClusterError::InvalidAdjacency);
                }
            }
        }
        let degrees: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
        let total_weight = degrees.iter().sum::<f64>() / 2.0;
        Ok(Self {
            adjacency,
            degrees,
            total_weight,
        })
    }

    /// Binary graph from an undirected edge list; repeated edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, ClusterError> {
        let mut a = DMatrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(ClusterError::InvalidEdge(u, v));
            }
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        Self::from_adjacency(a)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.adjacency[(u, v)]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Total edge weight `m = Σ_ij A_ij / 2`.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Edges `(u, v, w)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let w = self.adjacency[(u, v)];
                if w > 0.0 {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    /// Sorted neighbour lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n)
            .map(|u| (0..n).filter(|&v| self.adjacency[(u, v)] > 0.0).collect())
            .collect()
    }

    /// Connected-component labels numbered by smallest member vertex.
    pub fn components(&self) -> Vec<usize> {
        components_of(&self.neighbors())
    }
}

pub(crate) fn components_of(neighbors: &[Vec<usize>]) -> Vec<usize> {
    let n = neighbors.len();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for root in 0..n {
        if labels[root] != usize::MAX {
            continue;
        }
        labels[root] = next;
        stack.push(root);
        while let Some(u) = stack.pop() {
            for &v in &neighbors[u] {
                if labels[v] == usize::MAX {
                    labels[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    labels
}

/// `max(3, ⌈log₂ n⌉)`.
pub fn default_knn(n: usize) -> usize {
    let log = if n <= 1 { 0 } else { (n as f64).log2().ceil() as usize };
    log.max(3)
}

/// Union-symmetrized k-nearest-neighbour graph over the rows of `points`.
///
/// Distance ties (including duplicate points) go to the lower index.
pub fn build_knn_graph(
    points: &DMatrix<f64>,
    k: usize,
    weighting: Weighting,
) -> Result<AffinityGraph, ClusterError> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(ClusterError::NeighborsTooLarge { k, n });
    }
    let rows = rows_of(points);
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&rows[i], &rows[j]);
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    let sigma = match weighting {
        Weighting::Binary => 0.0,
        Weighting::Gaussian => median_pairwise(&dist),
    };
    let weight = |d: f64| match weighting {
        Weighting::Binary => 1.0,
        Weighting::Gaussian if sigma > 0.0 => (-d * d / (2.0 * sigma * sigma)).exp(),
        Weighting::Gaussian => 1.0,
    };

    let mut a = DMatrix::zeros(n, n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&x, &y| dist[(i, x)].total_cmp(&dist[(i, y)]).then(x.cmp(&y)));
        for &j in &order[..k] {
            // Gaussian weights of tiny distances can underflow to 0 only for
            // absurd spreads; keep the edge.
            let w = weight(dist[(i, j)]).max(f64::MIN_POSITIVE);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    AffinityGraph::from_adjacency(a)
}

fn median_pairwise(dist: &DMatrix<f64>) -> f64 {
    let n = dist.nrows();
    let mut ds: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| dist[(i, j)])
        .collect();
    if ds.is_empty() {
        return 0.0;
    }
    ds.sort_by(f64::total_cmp);
    let mid = ds.len() / 2;
    if ds.len() % 2 == 0 {
        0.5 * (ds[mid - 1] + ds[mid])
    } else {
        ds[mid]
    }
}
