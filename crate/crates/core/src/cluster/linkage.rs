use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::distance::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl Linkage {
    pub const ALL: [Linkage; 3] = [Linkage::Single, Linkage::Complete, Linkage::Average];

    pub fn name(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Linkage::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown linkage `{s}`")))
    }
}

/// One merge. Nodes `0..n` are leaves; the cluster created by step `s` is
/// node `n + s`. `left` is the side holding the smaller original index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: usize,
    steps: Vec<Merge>,
}

impl Dendrogram {
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn steps(&self) -> &[Merge] {
        &self.steps
    }
}

/// Flat clustering: `labels[i]` is the cluster of point `i`. Cluster ids are
/// numbered by ascending smallest member index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Renumbers arbitrary labels into canonical order.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&r| match map.iter().find(|(from, _)| *from == r) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((r, to));
                    to
                }
            })
            .collect();
        ClusterAssignment {
            labels,
            k: map.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of each cluster, in cluster-id order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &ClusterAssignment) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        self.clusters().iter().all(|members| {
            members
                .iter()
                .all(|&m| coarser.labels[m] == coarser.labels[members[0]])
        })
    }
}

/// Bottom-up merging with Lance-Williams updates of the cluster distance
/// table. Equal linkage distances go to the pair whose smallest original
/// indices are lexicographically smallest.
pub fn agglomerative(d: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    let n = d.len();
    let mut dist = d.entries.clone();
    // Active clusters, kept sorted by smallest member: (min member, node id, size).
    let mut active: Vec<(usize, usize, usize)> = (0..n).map(|i| (i, i, 1)).collect();
    let mut reps: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for (a, &ra) in reps.iter().enumerate() {
            let row = &dist[ra * n..ra * n + n];
            for (b, &rb) in reps.iter().enumerate().skip(a + 1) {
                let v = row[rb];
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let (ra, node_a, size_a) = active[a];
        let (rb, node_b, size_b) = active[b];
        for &(rk, _, _) in active.iter() {
            if rk == ra || rk == rb {
                continue;
            }
            let (dak, dbk) = (dist[ra * n + rk], dist[rb * n + rk]);
            let merged = match linkage {
                Linkage::Single => dak.min(dbk),
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => {
                    (size_a as f64 * dak + size_b as f64 * dbk) / (size_a + size_b) as f64
                }
            };
            dist[ra * n + rk] = merged;
            dist[rk * n + ra] = merged;
        }
        let size = size_a + size_b;
        steps.push(Merge {
            left: node_a,
            right: node_b,
            height,
            size,
        });
        active[a] = (ra, n + steps.len() - 1, size);
        active.remove(b);
        reps.remove(b);
    }
    Dendrogram { leaves: n, steps }
}

/// Undoes the last `k - 1` merges.
pub fn cut_k(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.leaves;
    if k < 1 || k > n {
        return Err(Error::Usage(format!("k = {k} outside 1..={n}")));
    }
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, m) in dendrogram.steps.iter().take(n - k).enumerate() {
        let node = n + s;
        let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
        parent[l] = node;
        parent[r] = node;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(ClusterAssignment::from_labels(&roots))
}
