use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_rows;
use super::{modularity, AffinityGraph, ClusterError, Clustering, KMeansConfig, Method};
use crate::linalg::SymEigen;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMode {
    /// Leading eigenvectors of `D^{-1/2} A D^{-1/2}`.
    #[default]
    Njw,
    /// Trailing eigenvectors of the unnormalized Laplacian `D − A`.
    Literal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    pub mode: SpectralMode,
    pub kmeans: KMeansConfig,
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// Eigenvalues of the selected eigenvectors, in selection order.
    pub eigenvalues: Vec<f64>,
    /// `n × K` orthonormal eigenvector columns.
    pub vectors: DMatrix<f64>,
    /// `vectors` with every non-zero row scaled to unit length.
    pub rows: DMatrix<f64>,
}

/// Full eigendecomposition of a graph's spectral operator, reused across K.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    mode: SpectralMode,
    eigen: SymEigen,
}

impl SpectralBasis {
    pub fn new(graph: &AffinityGraph, mode: SpectralMode) -> Result<Self, ClusterError> {
        if let Some(i) = graph.degrees().iter().position(|&d| d <= 0.0) {
            return Err(ClusterError::IsolatedVertex(i));
        }
        let operator = Self::operator(graph, mode);
        Ok(Self {
            mode,
            eigen: SymEigen::new(&operator),
        })
    }

    /// The matrix whose eigenvectors define the embedding.
    pub fn operator(graph: &AffinityGraph, mode: SpectralMode) -> DMatrix<f64> {
        let a = graph.adjacency();
        let d = graph.degrees();
        let n = graph.n();
        match mode {
            SpectralMode::Njw => {
                let inv_sqrt: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
                DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
            }
            SpectralMode::Literal => {
                DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { -a[(i, j)] })
            }
        }
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    pub fn n(&self) -> usize {
        self.eigen.values.len()
    }

    pub fn embed(&self, k: usize) -> Result<SpectralEmbedding, ClusterError> {
        let n = self.n();
        if k == 0 || k > n {
            return Err(ClusterError::InvalidClusterCount { k, n });
        }
        // Eigenvalues are ascending; NJW wants the top K (largest first).
        let picks: Vec<usize> = match self.mode {
            SpectralMode::Njw => (n - k..n).rev().collect(),
            SpectralMode::Literal => (0..k).collect(),
        };
        let mut vectors = DMatrix::zeros(n, k);
        for (dst, &src) in picks.iter().enumerate() {
            vectors.set_column(dst, &self.eigen.vectors.column(src));
        }
        let mut rows = vectors.clone();
        for i in 0..n {
            let norm = rows.row(i).norm();
            if norm > 0.0 {
                rows.row_mut(i).unscale_mut(norm);
            }
        }
        Ok(SpectralEmbedding {
            eigenvalues: picks.iter().map(|&j| self.eigen.values[j]).collect(),
            vectors,
            rows,
        })
    }

    /// K-means on the row-normalized K-dimensional embedding.
    pub fn cluster(
        &self,
        graph: &AffinityGraph,
        k: usize,
        seed: u64,
        kmeans: &KMeansConfig,
    ) -> Result<Clustering, ClusterError> {
        let emb = self.embed(k)?;
        let rows = crate::metrics::rows_of(&emb.rows);
        let run = kmeans_rows(&rows, k, seed, kmeans)?;
        let q = modularity(graph, &run.labels)?;
        Ok(Clustering {
            labels: run.labels,
            k,
            q,
            method: Method::Spectral,
            seed,
        })
    }
}

pub fn spectral_embed(
    graph: &AffinityGraph,
    k: usize,
    mode: SpectralMode,
) -> Result<SpectralEmbedding, ClusterError> {
    SpectralBasis::new(graph, mode)?.embed(k)
}

pub fn spectral_cluster(
    graph: &AffinityGraph,
    k: usize,
    seed: u64,
    opts: &SpectralOptions,
) -> Result<Clustering, ClusterError> {
    SpectralBasis::new(graph, opts.mode)?.cluster(graph, k, seed, &opts.kmeans)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    /// `None` when clustering failed for this K.
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub k_opt: usize,
    pub q_opt: f64,
    /// The spectral clustering at `k_opt`.
    pub best: Clustering,
}

impl SweepResult {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::from("K,Q\n");
        for row in &self.rows {
            match row.q {
                Some(q) => out.push_str(&format!("{},{}\n", row.k, q)),
                None => out.push_str(&format!("{},\n", row.k)),
            }
        }
        out.into_bytes()
    }
}

/// `2..=min(10, n − 1)`.
pub fn default_k_range(n: usize) -> RangeInclusive<usize> {
    2..=10.min(n.saturating_sub(1))
}

/// Spectral clustering for every K in range; keeps the K with the highest
/// modularity (smaller K on ties).
pub fn sweep_k(
    graph: &AffinityGraph,
    k_range: RangeInclusive<usize>,
    seed: u64,
    opts: &SpectralOptions,
) -> Result<SweepResult, ClusterError> {
    let basis = SpectralBasis::new(graph, opts.mode)?;
    let mut rows = Vec::new();
    let mut best: Option<Clustering> = None;
    for k in k_range {
        match basis.cluster(graph, k, seed, &opts.kmeans) {
            Ok(c) => {
                rows.push(SweepRow { k, q: Some(c.q) });
                if best.as_ref().is_none_or(|b| c.q > b.q) {
                    best = Some(c);
                }
            }
            Err(_) => rows.push(SweepRow { k, q: None }),
        }
    }
    let best = best.ok_or(ClusterError::EmptySweep)?;
    Ok(SweepResult {
        rows,
        k_opt: best.k,
        q_opt: best.q,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;

    fn two_triangles() -> AffinityGraph {
        AffinityGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)])
            .unwrap()
    }

    #[test]
    fn component_count_is_multiplicity_of_one() {
        // Three disjoint triangles.
        let mut edges = vec![];
        for b in 0..3 {
            let o = 3 * b;
            edges.extend([(o, o + 1), (o + 1, o + 2), (o, o + 2)]);
        }
        let g = AffinityGraph::from_edges(9, &edges).unwrap();
        let basis = SpectralBasis::new(&g, SpectralMode::Njw).unwrap();
        let ones = basis.eigen().values.iter().filter(|v| (*v - 1.0).abs() < 1e-10).count();
        assert_eq!(ones, 3);
    }

    #[test]
    fn single_edge_embeds_to_same_unit_value() {
        let g = AffinityGraph::from_edges(2, &[(0, 1)]).unwrap();
        let emb = spectral_embed(&g, 1, SpectralMode::Njw).unwrap();
        assert!((emb.rows[(0, 0)] - emb.rows[(1, 0)]).abs() < 1e-15);
        assert!((emb.rows[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((emb.eigenvalues[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_is_orthonormal_and_rows_unit() {
        let g = two_triangles();
        for mode in [SpectralMode::Njw, SpectralMode::Literal] {
            let emb = spectral_embed(&g, 3, mode).unwrap();
            assert!(orthonormality_error(&emb.vectors) < 1e-8);
            for i in 0..6 {
                assert!((emb.rows.row(i).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn literal_mode_takes_smallest_laplacian_eigenvalues() {
        let emb = spectral_embed(&two_triangles(), 2, SpectralMode::Literal).unwrap();
        assert!(emb.eigenvalues[0].abs() < 1e-12);
        assert!(emb.eigenvalues[1] > 0.0);
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let g = AffinityGraph::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(
            SpectralBasis::new(&g, SpectralMode::Njw).unwrap_err(),
            ClusterError::IsolatedVertex(2)
        );
    }

    #[test]
    fn bridge_graph_sweep_picks_two() {
        let g = two_triangles();
        let sweep = sweep_k(&g, 2..=5, 0, &SpectralOptions::default()).unwrap();
        assert_eq!(sweep.k_opt, 2);
        assert!((sweep.q_opt - 5.0 / 14.0).abs() < 1e-12);
        assert_eq!(sweep.best.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(sweep.rows.len(), 4);
    }

    #[test]
    fn two_vertex_graph_forced_k() {
        let g = AffinityGraph::from_edges(2, &[(0, 1)]).unwrap();
        let sweep = sweep_k(&g, 2..=2, 0, &SpectralOptions::default()).unwrap();
        assert_eq!(sweep.k_opt, 2);
        assert_eq!(sweep.best.labels, vec![0, 1]);
        assert!((sweep.q_opt + 0.5).abs() < 1e-15);
    }

    #[test]
    fn oversized_k_is_a_missing_row() {
        let g = two_triangles();
        let sweep = sweep_k(&g, 5..=7, 0, &SpectralOptions::default()).unwrap();
        assert_eq!(sweep.rows[2], SweepRow { k: 7, q: None });
        let csv = String::from_utf8(sweep.to_csv()).unwrap();
        assert!(csv.starts_with("K,Q\n5,"));
        assert!(csv.ends_with("\n7,\n"));
    }

    #[test]
    fn default_range() {
        assert_eq!(default_k_range(60), 2..=10);
        assert_eq!(default_k_range(5), 2..=4);
    }
}
