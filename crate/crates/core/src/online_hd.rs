//! OnlineHD weak learner: one class hypervector per label, refined by
//! similarity-scaled updates on misclassified samples.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_LR: f64 = 0.035;
pub const DEFAULT_EPOCHS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: DEFAULT_EPOCHS, lr: DEFAULT_LR, shuffle_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParams(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineHdModel {
    /// Row-major `n_classes x dim`.
    pub(crate) class_hvs: Vec<f32>,
    pub(crate) n_classes: usize,
    pub(crate) dim: usize,
    pub(crate) lr: f64,
}

/// Result of [`OnlineHdModel::fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: OnlineHdModel,
    /// Weighted training error after the final epoch, in `[0, 1]`.
    pub train_error: f64,
    /// Training-set predictions after the final epoch.
    pub predictions: Vec<usize>,
    /// Epochs actually run; training stops early at a fixed point.
    pub epochs_run: usize,
}

impl OnlineHdModel {
    pub fn zeros(n_classes: usize, dim: usize, lr: f64) -> Result<Self> {
        if n_classes == 0 || dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(OnlineHdModel { class_hvs: vec![0.0; n_classes * dim], n_classes, dim, lr })
    }

    pub(crate) fn from_parts(class_hvs: Vec<f32>, n_classes: usize, dim: usize, lr: f64) -> Result<Self> {
        if class_hvs.len() != n_classes * dim {
            return Err(Error::DimensionMismatch { expected: n_classes * dim, found: class_hvs.len() });
        }
        Ok(OnlineHdModel { class_hvs, n_classes, dim, lr })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn class_hv(&self, class: usize) -> &[f32] {
        &self.class_hvs[class * self.dim..(class + 1) * self.dim]
    }

    pub fn class_hvs(&self) -> &[f32] {
        &self.class_hvs
    }

    pub(crate) fn class_hvs_mut(&mut self) -> &mut [f32] {
        &mut self.class_hvs
    }

    /// Squared norms of every class hypervector.
    pub(crate) fn class_norms(&self) -> Vec<f64> {
        (0..self.n_classes).map(|c| norm2_f32(self.class_hv(c)).sqrt()).collect()
    }

    /// Cosine scores against precomputed class norms. Fails on zero-norm
    /// query or class.
    pub(crate) fn scores_with_norms(&self, h: &[f64], norms: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: h.len() });
        }
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if hn == 0.0 {
            return Err(Error::DegenerateEncoding);
        }
        (0..self.n_classes)
            .map(|c| {
                if norms[c] == 0.0 {
                    return Err(Error::UntrainedClass(c));
                }
                Ok(dot_f32(h, self.class_hv(c)) / (hn * norms[c]))
            })
            .collect()
    }

    /// Cosine similarity to every class and the argmax label. NaN scores
    /// (from faulty stored values) never win; ties go to the lowest index.
    pub fn predict(&self, h: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores_with_norms(h, &self.class_norms())?;
        Ok((argmax(&scores), scores))
    }

    pub fn predict_batch(&self, encoded: &Matrix) -> Result<Vec<usize>> {
        let norms = self.class_norms();
        encoded.iter_rows().map(|h| self.scores_with_norms(h, &norms).map(|s| argmax(&s))).collect()
    }

    /// Train a fresh model on an encoded matrix.
    ///
    /// `weights` defaults to uniform. Weights are normalized to sum to one
    /// and enter every update as the factor `N * w_i`; uniform weights give
    /// a factor of exactly 1.
    pub fn fit(
        encoded: &Matrix,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
        cfg: &TrainConfig,
    ) -> Result<FitOutcome> {
        cfg.validate()?;
        let n = encoded.rows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidLabel { label, n_classes });
        }
        let factors = sample_factors(weights, n)?;
        let dim = encoded.cols();
        let mut model = OnlineHdModel::zeros(n_classes, dim, cfg.lr)?;
        let mut norms = vec![0.0f64; n_classes];

        // single bundling pass in index order
        for i in 0..n {
            let h = encoded.row(i);
            let y = labels[i];
            let sim = train_sim(h, model.class_hv(y), norms[y]);
            let coef = cfg.lr * factors[i] * (1.0 - sim);
            model.axpy(y, coef, h);
            norms[y] = norm2_f32(model.class_hv(y)).sqrt();
        }

        let mut shuffle_rng = rng::seeded(cfg.shuffle_seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut epochs_run = 0;
        for _ in 0..cfg.epochs {
            order.sort_unstable();
            order.shuffle(&mut shuffle_rng);
            epochs_run += 1;
            let mut updates = 0usize;
            for &i in &order {
                if factors[i] == 0.0 {
                    continue;
                }
                let h = encoded.row(i);
                let y = labels[i];
                let sims = model.train_sims(h, &norms);
                let pred = argmax(&sims);
                if pred != y {
                    updates += 1;
                    model.axpy(y, cfg.lr * factors[i] * (1.0 - sims[y]), h);
                    model.axpy(pred, -cfg.lr * factors[i] * (1.0 - sims[pred]), h);
                    norms[y] = norm2_f32(model.class_hv(y)).sqrt();
                    norms[pred] = norm2_f32(model.class_hv(pred)).sqrt();
                }
            }
            if updates == 0 {
                break;
            }
        }

        let predictions: Vec<usize> = (0..n).map(|i| argmax(&model.train_sims(encoded.row(i), &norms))).collect();
        let total: f64 = factors.iter().sum();
        let wrong: f64 = (0..n).filter(|&i| predictions[i] != labels[i]).map(|i| factors[i]).sum();
        let train_error = (wrong / total).clamp(0.0, 1.0);
        Ok(FitOutcome { model, train_error, predictions, epochs_run })
    }

    fn train_sims(&self, h: &[f64], norms: &[f64]) -> Vec<f64> {
        (0..self.n_classes).map(|c| train_sim(h, self.class_hv(c), norms[c])).collect()
    }

    fn axpy(&mut self, class: usize, coef: f64, h: &[f64]) {
        let row = &mut self.class_hvs[class * self.dim..(class + 1) * self.dim];
        for (c, &v) in row.iter_mut().zip(h) {
            *c = (*c as f64 + coef * v) as f32;
        }
    }
}

/// Per-sample update factors `N * w_i / sum(w)`.
fn sample_factors(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    let Some(w) = weights else {
        return Ok(vec![1.0; n]);
    };
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.len() });
    }
    for (i, &v) in w.iter().enumerate() {
        if v.is_nan() || v.is_infinite() {
            return Err(Error::NonFinite);
        }
        if v < 0.0 {
            return Err(Error::NegativeWeight(i));
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    if w.iter().all(|&v| v == w[0]) {
        return Ok(vec![1.0; n]);
    }
    Ok(w.iter().map(|&v| v / total * n as f64).collect())
}

/// Similarity used during training: a zero class hypervector (or zero query)
/// counts as similarity 0.
#[inline]
fn train_sim(h: &[f64], class: &[f32], class_norm: f64) -> f64 {
    let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if class_norm == 0.0 || hn == 0.0 {
        return 0.0;
    }
    dot_f32(h, class) / (hn * class_norm)
}

#[inline]
pub(crate) fn dot_f32(h: &[f64], c: &[f32]) -> f64 {
    h.iter().zip(c).map(|(a, &b)| a * b as f64).sum()
}

#[inline]
pub(crate) fn norm2_f32(c: &[f32]) -> f64 {
    c.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

/// Index of the largest score; NaN never wins and ties keep the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if s > best_val {
            best = i;
            best_val = s;
        }
    }
    best
}

/// A standalone OnlineHD classifier: its own encoder plus one model.
#[derive(Debug, Clone, PartialEq)]
pub struct HdClassifier {
    pub encoder: EncoderParams,
    pub model: OnlineHdModel,
}

impl HdClassifier {
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        dim: usize,
        encoder_seed: u64,
        kind: EncoderKind,
        cfg: &TrainConfig,
    ) -> Result<(Self, FitOutcome)> {
        let encoder = EncoderParams::with_kind(x.cols(), dim, encoder_seed, kind)?;
        let encoded = encoder.encode_batch(x)?;
        let outcome = OnlineHdModel::fit(&encoded, labels, n_classes, None, cfg)?;
        Ok((HdClassifier { encoder, model: outcome.model.clone() }, outcome))
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let h = self.encoder.encode(x)?;
        self.model.predict(h.as_slice())
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.model.predict_batch(&self.encoder.encode_batch(x)?)
    }
}
