//! Direct recomputation of agglomerative clustering, used to cross-check
//! [`agglomerative`](super::agglomerative) in tests.

use super::distance::DistanceMatrix;
use super::linkage::{ClusterAssignment, Linkage};
use crate::error::{Error, Result};

fn linkage_distance(d: &DistanceMatrix, a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j)));
    match linkage {
        Linkage::Single => pairs.map(|(i, j)| d.get(i, j)).fold(f64::INFINITY, f64::min),
        Linkage::Complete => pairs.map(|(i, j)| d.get(i, j)).fold(0.0, f64::max),
        Linkage::Average => {
            pairs.map(|(i, j)| d.get(i, j)).sum::<f64>() / (a.len() * b.len()) as f64
        }
    }
}

/// O(n^3) per merge: every linkage distance is recomputed from the point
/// distances. Same tie rule as the fast path.
pub fn naive_oracle(d: &DistanceMatrix, linkage: Linkage, k: usize) -> Result<ClusterAssignment> {
    let n = d.len();
    if k < 1 || k > n {
        return Err(Error::Usage(format!("k = {k} outside 1..={n}")));
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let v = linkage_distance(d, &clusters[a], &clusters[b], linkage);
                let better = match best {
                    None => true,
                    Some((bv, ba, bb)) => {
                        let key = (clusters[a][0], clusters[b][0]);
                        let best_key = (clusters[ba][0], clusters[bb][0]);
                        v < bv || (v == bv && key < best_key)
                    }
                };
                if better {
                    best = Some((v, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    let mut labels = vec![0; n];
    for (id, c) in clusters.iter().enumerate() {
        for &m in c {
            labels[m] = id;
        }
    }
    Ok(ClusterAssignment::from_labels(&labels))
}
