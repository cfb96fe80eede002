//! Non-IID partition specs, synthetic feature generation and ingestion.

mod embeddings;
mod generate;
mod spec;

use std::collections::BTreeMap;

pub use embeddings::{
    export_embeddings, ingest_embeddings, read_embeddings, write_embeddings, Embeddings,
};
pub use generate::{
    build_test_set, generate, ClientData, FederatedDataset, Generator, GeneratorParams,
    TestSetParams, HOLDOUT_GROUP,
};
pub use spec::{
    load_partition_spec, table1, table2, ClientId, ClientSpec, PartitionSpec, TABLE1_SPEC,
    TABLE2_SPEC,
};

use crate::model::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassShare {
    pub count: usize,
    /// Percent in hundredths, rounded half-up: 4915 means 49.15%.
    pub percent_hundredths: u64,
}

impl ClassShare {
    pub fn percent(&self) -> f64 {
        self.percent_hundredths as f64 / 100.0
    }
}

/// Counts and half-up percentages to two decimals, in exact integer math.
pub fn histogram_from_counts(counts: &BTreeMap<usize, usize>) -> BTreeMap<usize, ClassShare> {
    let total: u64 = counts.values().map(|&c| c as u64).sum();
    counts
        .iter()
        .map(|(&k, &c)| {
            let percent_hundredths = if total == 0 {
                0
            } else {
                (c as u64 * 20_000 + total) / (2 * total)
            };
            (
                k,
                ClassShare {
                    count: c,
                    percent_hundredths,
                },
            )
        })
        .collect()
}

pub fn class_histogram(samples: &[Sample], num_classes: usize) -> BTreeMap<usize, ClassShare> {
    let mut counts: BTreeMap<usize, usize> = (0..num_classes).map(|k| (k, 0)).collect();
    for s in samples {
        *counts.entry(s.label).or_default() += 1;
    }
    histogram_from_counts(&counts)
}
