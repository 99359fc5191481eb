use std::collections::{BTreeMap, VecDeque};

use super::graph::components_of;
use super::{modularity, AffinityGraph, ClusterError, Clustering, Method};

/// Stopping rule for edge removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnTarget {
    /// Stop as soon as the graph splits into this many components.
    Components(usize),
    /// Remove every edge and return the intermediate partition with the
    /// highest modularity on the original graph (fewest components on ties).
    MaxModularity,
}

/// Shortest-path edge betweenness of an unweighted graph given as sorted
/// neighbour lists. Keys are `(u, v)` with `u < v`; each unordered vertex
/// pair contributes once.
pub fn edge_betweenness(neighbors: &[Vec<usize>]) -> BTreeMap<(usize, usize), f64> {
    let n = neighbors.len();
    let mut scores: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (u, ns) in neighbors.iter().enumerate() {
        for &v in ns {
            if u < v {
                scores.insert((u, v), 0.0);
            }
        }
    }
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();

        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &neighbors[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                *scores.get_mut(&(v.min(w), v.max(w))).expect("edge exists") += c;
                delta[v] += c;
            }
        }
    }
    // Every pair was counted from both endpoints.
    scores.values_mut().for_each(|s| *s /= 2.0);
    scores
}

/// Divisive clustering by repeatedly removing the edge of highest betweenness.
///
/// Betweenness is recomputed after every removal on the unweighted topology
/// (edges with positive weight). Ties go to the lexicographically smallest
/// `(u, v)`. Modularity is always scored on the original graph.
pub fn girvan_newman(graph: &AffinityGraph, target: GnTarget) -> Result<Clustering, ClusterError> {
    let n = graph.n();
    if let GnTarget::Components(k) = target {
        if k == 0 || k > n {
            return Err(ClusterError::InvalidClusterCount { k, n });
        }
    }
    let mut neighbors = graph.neighbors();
    let mut labels = components_of(&neighbors);
    let mut count = labels.iter().max().map_or(0, |m| m + 1);

    let score = |labels: &[usize]| modularity(graph, labels).unwrap_or(f64::NEG_INFINITY);
    let mut best = (score(&labels), labels.clone(), count);

    loop {
        if let GnTarget::Components(k) = target {
            if count >= k {
                break;
            }
        }
        let betweenness = edge_betweenness(&neighbors);
        let Some((&(u, v), _)) = betweenness
            .iter()
            .reduce(|a, b| if *b.1 > *a.1 * (1.0 + 1e-12) + 1e-12 { b } else { a })
        else {
            break;
        };
        neighbors[u].retain(|&x| x != v);
        neighbors[v].retain(|&x| x != u);
        let next = components_of(&neighbors);
        let next_count = next.iter().max().map_or(0, |m| m + 1);
        if next_count != count {
            labels = next;
            count = next_count;
            let q = score(&labels);
            if q > best.0 {
                best = (q, labels.clone(), count);
            }
        }
    }

    let (labels, k) = match target {
        GnTarget::Components(_) => (labels, count),
        GnTarget::MaxModularity => (best.1, best.2),
    };
    let q = modularity(graph, &labels)?;
    Ok(Clustering {
        labels,
        k,
        q,
        method: Method::Gn,
        seed: 0,
    })
}
