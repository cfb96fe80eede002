//! Local mini-batch SGD on a client, FedAvg aggregation and evaluation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ClientId;
use crate::error::{Error, Result};
use crate::model::{LinearSoftmaxModel, Sample, WeightVector};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub num_classes: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdParams {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams {
            learning_rate: 0.001,
            local_epochs: 5,
            batch_size: 32,
            shuffle_seed: 0,
        }
    }
}

impl SgdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be a finite non-negative number".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client_id: ClientId,
    pub weights: WeightVector,
    pub sample_count: usize,
    /// Mean per-sample loss seen during the final local epoch.
    pub train_loss: f64,
}

pub fn local_train(
    client_id: ClientId,
    global: &WeightVector,
    shape: ModelShape,
    dataset: &[Sample],
    params: &SgdParams,
) -> Result<LocalUpdate> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::Usage(format!("client {client_id} has no local data")));
    }
    let mut model = LinearSoftmaxModel::unflatten(global, shape.num_classes, shape.feature_dim)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(params.batch_size);
    let mut epoch_loss = 0.0;
    for epoch in 0..params.local_epochs {
        let mut rng = rng::stream(
            params.shuffle_seed,
            &[rng::TAG_SHUFFLE, u64::from(client_id), epoch as u64],
        );
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(params.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let (loss, grad) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "client {client_id} diverged in local epoch {epoch}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            if params.learning_rate != 0.0 {
                model.apply_step(&grad, params.learning_rate);
            }
        }
        epoch_loss = loss_sum / dataset.len() as f64;
    }
    if !model.is_finite() {
        return Err(Error::Numeric(format!(
            "client {client_id} produced non-finite weights"
        )));
    }
    Ok(LocalUpdate {
        client_id,
        weights: model.flatten(),
        sample_count: dataset.len(),
        train_loss: epoch_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    SampleWeighted,
    Uniform,
}

/// FedAvg. Updates are summed in ascending client-id order whatever the
/// input order, so the result is bit-identical under permutation.
pub fn fedavg(updates: &[LocalUpdate], mode: AggregationMode) -> Result<WeightVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Usage("fedavg of an empty update list".into()))?;
    let len = first.weights.len();
    if let Some(bad) = updates.iter().find(|u| u.weights.len() != len) {
        return Err(Error::Shape(format!(
            "update from client {} has length {}, expected {len}",
            bad.client_id,
            bad.weights.len()
        )));
    }
    let mut ordered: Vec<&LocalUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    if ordered.iter().all(|u| u.weights == first.weights) {
        return Ok(first.weights.clone());
    }
    let coeff = |u: &LocalUpdate| match mode {
        AggregationMode::SampleWeighted => u.sample_count as f64,
        AggregationMode::Uniform => 1.0,
    };
    let total: f64 = ordered.iter().map(|u| coeff(u)).sum();
    if !(total > 0.0) {
        return Err(Error::Usage("fedavg weights sum to zero".into()));
    }
    let mut acc = vec![0.0; len];
    for u in &ordered {
        let c = coeff(u);
        for (a, w) in acc.iter_mut().zip(&u.weights.0) {
            *a += c * w;
        }
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    let out = WeightVector(acc);
    if !out.is_finite() {
        return Err(Error::Numeric("aggregated weights are not finite".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

pub fn evaluate(global: &WeightVector, shape: ModelShape, test: &[Sample]) -> Result<Evaluation> {
    let model = LinearSoftmaxModel::unflatten(global, shape.num_classes, shape.feature_dim)?;
    Ok(Evaluation {
        accuracy: model.accuracy(test)?,
        loss: model.cross_entropy_loss(test)?,
    })
}
