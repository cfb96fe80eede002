//! Hierarchical agglomerative clustering of client weight vectors.

mod distance;
mod grid;
mod linkage;
pub mod oracle;
mod quality;

pub use distance::{pairwise_distances, pairwise_distances_raw, DistanceMatrix, Metric};
pub use grid::{grid_search, GridResult};
pub use linkage::{agglomerative, cut_k, ClusterAssignment, Dendrogram, Linkage, Merge};
pub use oracle::naive_oracle;
pub use quality::{adjusted_rand_index, silhouette};

use crate::error::Result;
use crate::model::WeightVector;

/// Distances, dendrogram and flat cut in one call.
pub fn cluster_vectors(
    vectors: &[WeightVector],
    metric: Metric,
    linkage: Linkage,
    k: usize,
) -> Result<ClusterAssignment> {
    let d = pairwise_distances(vectors, metric)?;
    cut_k(&agglomerative(&d, linkage), k)
}
