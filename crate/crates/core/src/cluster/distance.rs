use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WeightVector;

const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
    Manhattan,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cosine, Metric::Euclidean, Metric::Manhattan];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    pub fn distance(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Metric::Cosine => cosine_from_parts(lane_dot(u, v), lane_dot(u, u), lane_dot(v, v)),
            Metric::Euclidean => u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum(),
        }
    }
}

/// Dot product over eight interleaved lanes; the summation order is fixed.
fn lane_dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let uc = u.chunks_exact(8);
    let vc = v.chunks_exact(8);
    let tail: f64 = uc.remainder().iter().zip(vc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in uc.zip(vc) {
        let a: &[f64; 8] = a.try_into().expect("chunk of 8");
        let b: &[f64; 8] = b.try_into().expect("chunk of 8");
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn cosine_from_parts(uv: f64, uu: f64, vv: f64) -> f64 {
    if uu.sqrt() < COSINE_NORM_FLOOR || vv.sqrt() < COSINE_NORM_FLOOR {
        return 1.0;
    }
    // sqrt(uu * vv) rather than |u||v| keeps d(v, v) and d(v, 2v) exactly 0.
    (1.0 - uv / (uu * vv).sqrt()).clamp(0.0, 2.0)
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

/// Symmetric matrix of pairwise distances with an exactly-zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    pub(crate) entries: Vec<f64>,
    metric: Option<Metric>,
}

impl DistanceMatrix {
    /// Builds a matrix from a full row-major table; it must be symmetric
    /// with a zero diagonal and non-negative entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            entries.extend_from_slice(row);
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::Shape(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if !(a >= 0.0) || (a - b).abs() > 1e-12 {
                    return Err(Error::Shape(format!(
                        "entries ({i},{j}) must be non-negative and symmetric"
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            n,
            entries,
            metric: None,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> Option<Metric> {
        self.metric
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

pub fn pairwise_distances(vectors: &[WeightVector], metric: Metric) -> Result<DistanceMatrix> {
    let slices: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    pairwise_distances_raw(&slices, metric)
}

pub fn pairwise_distances_raw(vectors: &[&[f64]], metric: Metric) -> Result<DistanceMatrix> {
    if vectors.len() < 2 {
        return Err(Error::Usage(format!(
            "need at least 2 vectors for pairwise distances, got {}",
            vectors.len()
        )));
    }
    let len = vectors[0].len();
    if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != len) {
        return Err(Error::Shape(format!(
            "vector {i} has length {}, expected {len}",
            v.len()
        )));
    }
    let n = vectors.len();
    let mut entries = vec![0.0; n * n];
    let norms: Vec<f64> = match metric {
        Metric::Cosine => vectors.iter().map(|v| lane_dot(v, v)).collect(),
        _ => Vec::new(),
    };
    for i in 0..n {
        for j in i + 1..n {
            let d = match metric {
                Metric::Cosine => cosine_from_parts(lane_dot(vectors[i], vectors[j]), norms[i], norms[j]),
                _ => metric.distance(vectors[i], vectors[j]),
            };
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        n,
        entries,
        metric: Some(metric),
    })
}
