use super::distance::DistanceMatrix;
use super::linkage::ClusterAssignment;
use crate::error::{Error, Result};

/// Mean silhouette coefficient; singletons score 0.
pub fn silhouette(d: &DistanceMatrix, assignment: &ClusterAssignment) -> Result<f64> {
    let n = d.len();
    if assignment.len() != n {
        return Err(Error::Shape(format!(
            "assignment covers {} points, distance matrix {n}",
            assignment.len()
        )));
    }
    let k = assignment.k();
    if k < 2 {
        return Err(Error::Usage(format!("silhouette needs at least 2 clusters, got {k}")));
    }
    let clusters = assignment.clusters();
    if clusters.iter().any(Vec::is_empty) {
        return Err(Error::Internal("empty cluster in assignment".into()));
    }
    let labels = assignment.labels();
    let mut total = 0.0;
    for i in 0..n {
        let own = &clusters[labels[i]];
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().map(|&j| d.get(i, j)).sum::<f64>() / (own.len() - 1) as f64;
        let b = clusters
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != labels[i])
            .map(|(_, m)| m.iter().map(|&j| d.get(i, j)).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape("labelings differ in length".into()));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let comb2 = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = table.iter().map(|&v| comb2(v)).sum();
    let sum_rows: f64 = (0..ka)
        .map(|i| comb2(table[i * kb..(i + 1) * kb].iter().sum()))
        .sum();
    let sum_cols: f64 = (0..kb)
        .map(|j| comb2((0..ka).map(|i| table[i * kb + j]).sum()))
        .sum();
    let total = comb2(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max - expected))
}
