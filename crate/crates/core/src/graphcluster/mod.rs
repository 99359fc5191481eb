//! Graph-based clustering of episodes.
//!
//! Episodes become vertices of a symmetric k-nearest-neighbour graph. The
//! primary clusterer embeds the graph with the leading eigenvectors of its
//! normalized affinity, row-normalizes the embedding and runs K-means on the
//! rows; the number of clusters is the K that maximizes Newman-Girvan
//! modularity. Girvan-Newman edge removal and plain K-means with the elbow
//! rule are provided as baselines.

mod girvan_newman;
mod graph;
mod kmeans;
mod levels;
mod modularity;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use girvan_newman::{edge_betweenness, girvan_newman, GnTarget};
pub use graph::{build_knn_graph, default_knn, AffinityGraph, Weighting};
pub use kmeans::{elbow_k, kmeans, kmeans_elbow, KMeansConfig, KMeansResult};
pub use levels::assign_heaviness_levels;
pub use modularity::modularity;
pub use spectral::{
    default_k_range, spectral_cluster, spectral_embed, sweep_k, SpectralBasis, SpectralEmbedding, SpectralMode,
    SpectralOptions, SweepResult, SweepRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} must be smaller than the number of points ({n})")]
    NeighborsTooLarge { k: usize, n: usize },
    #[error("cluster count {k} is invalid for {n} points")]
    InvalidClusterCount { k: usize, n: usize },
    #[error("vertex {0} has no edges; increase the neighbour count or remove the sample")]
    IsolatedVertex(usize),
    #[error("graph has no edges, modularity is undefined")]
    EmptyGraph,
    #[error("labels cover {labels} vertices but the graph has {n}")]
    LabelMismatch { labels: usize, n: usize },
    #[error("adjacency must be square, symmetric, non-negative with a zero diagonal")]
    InvalidAdjacency,
    #[error("edge ({0}, {1}) is out of range or a self-loop")]
    InvalidEdge(usize, usize),
    #[error("elbow rule needs at least 3 distortion values, got {0}")]
    ShortDistortionCurve(usize),
    #[error("no candidate K produced a clustering")]
    EmptySweep,
}

/// Graph construction and K-sweep settings shared by every spectral stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Neighbour count; `None` uses [`default_knn`].
    pub knn: Option<usize>,
    pub weighting: Weighting,
    pub k_min: usize,
    pub k_max: usize,
    pub spectral: SpectralOptions,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            knn: None,
            weighting: Weighting::Binary,
            k_min: 2,
            k_max: 10,
            spectral: SpectralOptions::default(),
        }
    }
}

impl GraphConfig {
    pub fn knn_for(&self, n: usize) -> usize {
        self.knn.unwrap_or_else(|| default_knn(n)).min(n.saturating_sub(1))
    }

    /// `k_min..=min(k_max, n − 1)`.
    pub fn k_range(&self, n: usize) -> std::ops::RangeInclusive<usize> {
        self.k_min..=self.k_max.min(n.saturating_sub(1))
    }

    pub fn graph(&self, points: &nalgebra::DMatrix<f64>) -> Result<AffinityGraph, ClusterError> {
        build_knn_graph(points, self.knn_for(points.nrows()), self.weighting)
    }

    /// Builds the k-NN graph and sweeps K by modularity.
    pub fn sweep(
        &self,
        points: &nalgebra::DMatrix<f64>,
        seed: u64,
    ) -> Result<(AffinityGraph, SweepResult), ClusterError> {
        let graph = self.graph(points)?;
        let sweep = sweep_k(&graph, self.k_range(points.nrows()), seed, &self.spectral)?;
        Ok((graph, sweep))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spectral,
    Gn,
    Kmeans,
}

/// A labeling of vertices into `k` non-empty groups `0..k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub k: usize,
    pub q: f64,
    pub method: Method,
    pub seed: u64,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Renames clusters in order of first appearance; returns the cluster count.
pub fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}
