use super::Clustering;
use crate::metrics::mean;
use crate::signal::FeatureTable;

/// Heaviness level (1 = lightest) of every cluster id.
///
/// Clusters are ranked by the mean of their members' main-cycle average heart
/// rate, then by mean peak heart rate, then by cluster id.
pub fn assign_heaviness_levels(clustering: &Clustering, table: &FeatureTable) -> Vec<usize> {
    let k = clustering.k;
    let mut keys: Vec<(f64, f64, usize)> = (0..k)
        .map(|c| {
            let members = clustering.members(c);
            let cycle_means: Vec<f64> = members.iter().map(|&i| table.rows[i].cycle_mean).collect();
            let peaks: Vec<f64> = members.iter().map(|&i| table.rows[i].peak).collect();
            (mean(&cycle_means), mean(&peaks), c)
        })
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut levels = vec![0; k];
    for (rank, key) in keys.iter().enumerate() {
        levels[key.2] = rank + 1;
    }
    levels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphcluster::Method;
    use crate::signal::FeatureVector;

    fn row(cycle_mean: f64, peak: f64) -> FeatureVector {
        let mut a = [0.0; crate::signal::FEATURE_COUNT];
        a[9] = cycle_mean;
        a[2] = peak;
        FeatureVector::from_array(&a)
    }

    fn clustering(labels: Vec<usize>, k: usize) -> Clustering {
        Clustering { labels, k, q: 0.0, method: Method::Spectral, seed: 0 }
    }

    #[test]
    fn sorted_by_cycle_mean() {
        let mut t = FeatureTable::default();
        for (i, cm) in [70.0, 90.0, 80.0].into_iter().enumerate() {
            t.push(i.to_string(), row(cm, 100.0));
        }
        assert_eq!(assign_heaviness_levels(&clustering(vec![0, 1, 2], 3), &t), vec![1, 3, 2]);
    }

    #[test]
    fn peak_breaks_ties() {
        let mut t = FeatureTable::default();
        t.push("a", row(80.0, 110.0));
        t.push("b", row(80.0, 100.0));
        assert_eq!(assign_heaviness_levels(&clustering(vec![0, 1], 2), &t), vec![2, 1]);
    }

    #[test]
    fn single_cluster_is_level_one() {
        let mut t = FeatureTable::default();
        t.push("a", row(80.0, 110.0));
        t.push("b", row(70.0, 100.0));
        assert_eq!(assign_heaviness_levels(&clustering(vec![0, 0], 1), &t), vec![1]);
    }
}
