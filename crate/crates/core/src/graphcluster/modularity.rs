use super::{AffinityGraph, ClusterError};

/// Newman-Girvan modularity `Q = (1/2m) Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j)`.
///
/// Evaluated per community as `Σ_c [L_c / 2m − (d_c / 2m)²]`, where `d_c` is
/// the community's total degree and `L_c = d_c − cut_c` sums `A_ij` over
/// ordered pairs inside `c`. A single community therefore scores exactly 0.
pub fn modularity(graph: &AffinityGraph, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = graph.n();
    if labels.len() != n {
        return Err(ClusterError::LabelMismatch {
            labels: labels.len(),
            n,
        });
    }
    let two_m = 2.0 * graph.total_weight();
    if two_m <= 0.0 {
        return Err(ClusterError::EmptyGraph);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0; k];
    let mut degree = vec![0.0; k];
    let a = graph.adjacency();
    for i in 0..n {
        degree[labels[i]] += graph.degrees()[i];
        for j in 0..n {
            if labels[i] != labels[j] {
                cut[labels[i]] += a[(i, j)];
            }
        }
    }
    Ok(cut
        .iter()
        .zip(&degree)
        .map(|(c, d)| (d - c) / two_m - (d / two_m) * (d / two_m))
        .sum())
}
