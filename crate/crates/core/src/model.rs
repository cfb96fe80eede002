//! Softmax classification head over fixed backbone features.
//!
//! Only this single linear layer is trained; the features a [`Sample`]
//! carries stand in for frozen-backbone activations.

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Sample { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    #[default]
    UniformScaled,
}

/// Flattened head parameters: row-major weights followed by biases.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(len: usize) -> Self {
        WeightVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Componentwise `self - other`.
    pub fn delta(&self, other: &WeightVector) -> Result<WeightVector> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "weight vector lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(WeightVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

pub fn weight_vector_len(num_classes: usize, feature_dim: usize) -> usize {
    num_classes * (feature_dim + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    num_classes: usize,
    feature_dim: usize,
    /// `num_classes` rows of `feature_dim` entries.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

fn check_dims(num_classes: usize, feature_dim: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::Config(format!(
            "num_classes must be at least 2, got {num_classes}"
        )));
    }
    if feature_dim < 1 {
        return Err(Error::Config("feature_dim must be at least 1".into()));
    }
    Ok(())
}

pub fn init_model(
    num_classes: usize,
    feature_dim: usize,
    seed: u64,
    scheme: InitScheme,
) -> Result<LinearSoftmaxModel> {
    check_dims(num_classes, feature_dim)?;
    let len = num_classes * feature_dim;
    let (weights, biases) = match scheme {
        InitScheme::Zeros => (vec![0.0; len], vec![0.0; num_classes]),
        InitScheme::UniformScaled => {
            let bound = 1.0 / (feature_dim as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound)
                .map_err(|e| Error::Internal(e.to_string()))?;
            let mut rng = rng::stream(seed, &[rng::TAG_MODEL_INIT]);
            let weights = (0..len).map(|_| rng.sample(dist)).collect();
            let biases = (0..num_classes).map(|_| rng.sample(dist)).collect();
            (weights, biases)
        }
    };
    Ok(LinearSoftmaxModel {
        num_classes,
        feature_dim,
        weights,
        biases,
    })
}

impl LinearSoftmaxModel {
    pub fn from_parts(
        num_classes: usize,
        feature_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        check_dims(num_classes, feature_dim)?;
        if weights.len() != num_classes * feature_dim || biases.len() != num_classes {
            return Err(Error::Shape(format!(
                "expected {}x{} weights and {} biases, got {} and {}",
                num_classes,
                feature_dim,
                num_classes,
                weights.len(),
                biases.len()
            )));
        }
        Ok(LinearSoftmaxModel {
            num_classes,
            feature_dim,
            weights,
            biases,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn flatten(&self) -> WeightVector {
        let mut values = Vec::with_capacity(self.weights.len() + self.biases.len());
        values.extend_from_slice(&self.weights);
        values.extend_from_slice(&self.biases);
        WeightVector(values)
    }

    pub fn unflatten(v: &WeightVector, num_classes: usize, feature_dim: usize) -> Result<Self> {
        check_dims(num_classes, feature_dim)?;
        let expected = weight_vector_len(num_classes, feature_dim);
        if v.len() != expected {
            return Err(Error::Shape(format!(
                "weight vector has length {}, expected {expected}",
                v.len()
            )));
        }
        let split = num_classes * feature_dim;
        Ok(LinearSoftmaxModel {
            num_classes,
            feature_dim,
            weights: v.0[..split].to_vec(),
            biases: v.0[split..].to_vec(),
        })
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "feature vector has length {}, model expects {}",
                features.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn logits_into(&self, features: &[f64], out: &mut [f64]) {
        for (c, out) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.feature_dim..(c + 1) * self.feature_dim];
            *out = self.biases[c] + dot(row, features);
        }
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let mut out = vec![0.0; self.num_classes];
        self.logits_into(features, &mut out);
        Ok(out)
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut p = self.logits(features)?;
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Argmax class, ties going to the lowest index.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        let logits = self.logits(features)?;
        Ok(argmax(&logits))
    }

    fn check_label(&self, s: &Sample) -> Result<()> {
        if s.label >= self.num_classes {
            return Err(Error::Shape(format!(
                "label {} out of range for {} classes",
                s.label, self.num_classes
            )));
        }
        self.check_features(&s.features)
    }

    /// Mean negative log-likelihood over `batch`.
    pub fn cross_entropy_loss(&self, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Usage("cross-entropy of an empty batch".into()));
        }
        let mut logits = vec![0.0; self.num_classes];
        let mut total = 0.0;
        for s in batch {
            self.check_label(s)?;
            self.logits_into(&s.features, &mut logits);
            total += nll_from_logits(&logits, s.label);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss over `batch` and its gradient, laid out like [`WeightVector`].
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Usage("gradient of an empty batch".into()));
        }
        let d = self.feature_dim;
        let split = self.num_classes * d;
        let mut grad = vec![0.0; split + self.num_classes];
        let mut p = vec![0.0; self.num_classes];
        let mut total = 0.0;
        for s in batch {
            self.check_label(s)?;
            self.logits_into(&s.features, &mut p);
            total += nll_from_logits(&p, s.label);
            softmax_in_place(&mut p);
            p[s.label] -= 1.0;
            for (c, &g) in p.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (gw, x) in grad[c * d..(c + 1) * d].iter_mut().zip(&s.features) {
                    *gw += g * x;
                }
                grad[split + c] += g;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grad))
    }

    /// `params -= step * grad`, with `grad` in flattened layout.
    pub fn apply_step(&mut self, grad: &[f64], step: f64) {
        let split = self.weights.len();
        for (w, g) in self.weights.iter_mut().zip(&grad[..split]) {
            *w -= step * g;
        }
        for (b, g) in self.biases.iter_mut().zip(&grad[split..]) {
            *b -= step * g;
        }
    }

    pub fn accuracy(&self, dataset: &[Sample]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Usage("accuracy of an empty dataset".into()));
        }
        let mut logits = vec![0.0; self.num_classes];
        let mut correct = 0usize;
        for s in dataset {
            self.check_label(s)?;
            self.logits_into(&s.features, &mut logits);
            if argmax(&logits) == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max subtraction).
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `-log softmax(logits)[label]` via log-sum-exp.
fn nll_from_logits(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
