use std::cmp::Ordering;

use super::distance::{pairwise_distances, Metric};
use super::linkage::{agglomerative, cut_k, Linkage};
use super::quality::silhouette;
use crate::error::{Error, Result};
use crate::model::WeightVector;

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub metric: Metric,
    pub linkage: Linkage,
    pub k: usize,
    pub mean_silhouette: f64,
}

/// Scores every (metric, linkage, k) on every snapshot by mean silhouette,
/// best first; ties fall back to lexical (metric, linkage, k) order.
pub fn grid_search(
    snapshots: &[Vec<WeightVector>],
    metrics: &[Metric],
    linkages: &[Linkage],
    k_values: &[usize],
) -> Result<Vec<GridResult>> {
    if snapshots.is_empty() {
        return Err(Error::Usage("grid search needs at least one snapshot".into()));
    }
    if metrics.is_empty() || linkages.is_empty() || k_values.is_empty() {
        return Err(Error::Usage("grid search needs non-empty metric, linkage and k grids".into()));
    }
    for (s, snap) in snapshots.iter().enumerate() {
        if let Some(&k) = k_values.iter().find(|&&k| k < 2 || k > snap.len()) {
            return Err(Error::Usage(format!(
                "k = {k} invalid for snapshot {s} with {} vectors",
                snap.len()
            )));
        }
    }
    let mut sums = vec![0.0; metrics.len() * linkages.len() * k_values.len()];
    for snap in snapshots {
        for (mi, &metric) in metrics.iter().enumerate() {
            let d = pairwise_distances(snap, metric)?;
            for (li, &linkage) in linkages.iter().enumerate() {
                let dendrogram = agglomerative(&d, linkage);
                for (ki, &k) in k_values.iter().enumerate() {
                    let assignment = cut_k(&dendrogram, k)?;
                    let idx = (mi * linkages.len() + li) * k_values.len() + ki;
                    sums[idx] += silhouette(&d, &assignment)?;
                }
            }
        }
    }
    let mut results = Vec::with_capacity(sums.len());
    for (mi, &metric) in metrics.iter().enumerate() {
        for (li, &linkage) in linkages.iter().enumerate() {
            for (ki, &k) in k_values.iter().enumerate() {
                let idx = (mi * linkages.len() + li) * k_values.len() + ki;
                results.push(GridResult {
                    metric,
                    linkage,
                    k,
                    mean_silhouette: sums[idx] / snapshots.len() as f64,
                });
            }
        }
    }
    results.sort_by(|a, b| {
        b.mean_silhouette
            .partial_cmp(&a.mean_silhouette)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.metric.name().cmp(b.metric.name()))
            .then_with(|| a.linkage.name().cmp(b.linkage.name()))
            .then_with(|| a.k.cmp(&b.k))
    });
    results.dedup_by(|a, b| a.metric == b.metric && a.linkage == b.linkage && a.k == b.k);
    Ok(results)
}
