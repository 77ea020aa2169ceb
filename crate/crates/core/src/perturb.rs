//! Bit-flip fault injection on stored models and the MAD statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::BoostHdModel;
use crate::data::{accuracy, Dataset};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::online_hd::{HdClassifier, OnlineHdModel};
use crate::rng::keyed_unit;
use crate::sweep::{SweepKind, SweepResult, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub p_b: f64,
    pub trials: usize,
    pub seed: u64,
    /// Also flip bits of the encoder basis and phases.
    pub include_encoder: bool,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { p_b: 0.0, trials: 100, seed: 0, include_encoder: false }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability(self.p_b)?;
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be positive".into()));
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// A model whose stored `f32` tensors can receive faults.
///
/// Tensors are visited in a fixed order and elements are numbered
/// consecutively across them, so a fault pattern depends only on
/// `(seed, trial, element, bit)`.
pub trait FaultTarget: Clone + Send + Sync {
    fn fault_tensors(&mut self, include_encoder: bool) -> Vec<&mut [f32]>;

    fn encoder(&self) -> Option<&EncoderParams>;

    /// Labels for a test set already encoded with [`FaultTarget::encoder`].
    fn predict_encoded_batch(&self, encoded: &Matrix) -> Result<Vec<usize>>;

    fn d_total(&self) -> usize;

    fn n_learners(&self) -> usize;
}

impl FaultTarget for OnlineHdModel {
    fn fault_tensors(&mut self, _include_encoder: bool) -> Vec<&mut [f32]> {
        vec![self.class_hvs_mut()]
    }

    fn encoder(&self) -> Option<&EncoderParams> {
        None
    }

    fn predict_encoded_batch(&self, encoded: &Matrix) -> Result<Vec<usize>> {
        self.predict_batch(encoded)
    }

    fn d_total(&self) -> usize {
        self.dim()
    }

    fn n_learners(&self) -> usize {
        1
    }
}

impl FaultTarget for HdClassifier {
    fn fault_tensors(&mut self, include_encoder: bool) -> Vec<&mut [f32]> {
        let mut out = vec![self.model.class_hvs_mut()];
        if include_encoder {
            let enc = &mut self.encoder;
            let (basis, phases) = enc.tensors_mut();
            out.push(basis);
            out.push(phases);
        }
        out
    }

    fn encoder(&self) -> Option<&EncoderParams> {
        Some(&self.encoder)
    }

    fn predict_encoded_batch(&self, encoded: &Matrix) -> Result<Vec<usize>> {
        self.model.predict_batch(encoded)
    }

    fn d_total(&self) -> usize {
        self.model.dim()
    }

    fn n_learners(&self) -> usize {
        1
    }
}

impl FaultTarget for BoostHdModel {
    fn fault_tensors(&mut self, include_encoder: bool) -> Vec<&mut [f32]> {
        let (encoder, learners) = self.split_mut();
        let mut out: Vec<&mut [f32]> = learners.iter_mut().map(|l| l.class_hvs_mut()).collect();
        if include_encoder {
            let (basis, phases) = encoder.tensors_mut();
            out.push(basis);
            out.push(phases);
        }
        out
    }

    fn encoder(&self) -> Option<&EncoderParams> {
        Some(BoostHdModel::encoder(self))
    }

    fn predict_encoded_batch(&self, encoded: &Matrix) -> Result<Vec<usize>> {
        self.predict_batch_encoded(encoded)
    }

    fn d_total(&self) -> usize {
        BoostHdModel::d_total(self)
    }

    fn n_learners(&self) -> usize {
        self.learners().len()
    }
}

/// Flip every stored bit in `tensors` independently with probability `p_b`.
/// Returns the number of flipped bits.
pub fn flip_bits(tensors: &mut [&mut [f32]], p_b: f64, seed: u64, trial: u64) -> Result<u64> {
    check_probability(p_b)?;
    if p_b == 0.0 {
        return Ok(0);
    }
    let mut flipped = 0u64;
    let mut element = 0u64;
    for t in tensors.iter_mut() {
        for v in t.iter_mut() {
            let mut mask = 0u32;
            for bit in 0..32u64 {
                if keyed_unit(seed, &[trial, element, bit]) < p_b {
                    mask |= 1 << bit;
                }
            }
            if mask != 0 {
                *v = f32::from_bits(v.to_bits() ^ mask);
                flipped += u64::from(mask.count_ones());
            }
            element += 1;
        }
    }
    Ok(flipped)
}

/// A faulty copy of `model` for trial `trial`, plus the flipped-bit count.
/// The input is never modified.
pub fn bitflip_model<M: FaultTarget>(model: &M, cfg: &PerturbConfig, trial: u64) -> Result<(M, u64)> {
    cfg.validate()?;
    let mut copy = model.clone();
    let n = flip_bits(&mut copy.fault_tensors(cfg.include_encoder), cfg.p_b, cfg.seed, trial)?;
    Ok((copy, n))
}

/// Median; even lengths average the two central order statistics.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Result<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Accuracy of `trials` faulty copies of `model` at every `p_b`.
///
/// Emits `accuracy` and `flipped_bits` rows per `(p_b, trial)`, tagged with
/// `model_name` and `cfg.seed`. `cfg.p_b` is ignored.
pub fn robustness_sweep<M: FaultTarget>(
    model: &M,
    model_name: &str,
    test: &Dataset,
    p_b_values: &[f64],
    cfg: &PerturbConfig,
) -> Result<SweepResult> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &p in p_b_values {
        check_probability(p)?;
    }
    let encoder = model.encoder().ok_or_else(|| Error::InvalidParams("model has no encoder".into()))?;
    let clean_encoded = encoder.encode_batch(&test.x)?;
    let cells: Vec<(f64, u64)> = p_b_values.iter().flat_map(|&p| (0..cfg.trials as u64).map(move |t| (p, t))).collect();
    let results: Vec<(f64, u64, f64, u64)> = cells
        .par_iter()
        .map(|&(p_b, trial)| {
            let c = PerturbConfig { p_b, ..*cfg };
            let (faulty, flipped) = bitflip_model(model, &c, trial)?;
            let pred = if c.include_encoder && p_b > 0.0 {
                let enc = faulty.encoder().expect("encoder").encode_batch(&test.x)?;
                faulty.predict_encoded_batch(&enc)?
            } else {
                faulty.predict_encoded_batch(&clean_encoded)?
            };
            Ok((p_b, trial, accuracy(&test.y, &pred)?, flipped))
        })
        .collect::<Result<_>>()?;

    let (d_total, n_learners) = (model.d_total(), model.n_learners());
    let mut out = SweepResult::new(SweepKind::Robustness);
    for (p_b, trial, acc, flipped) in results {
        let row = SweepRow {
            model: model_name.to_string(),
            d_total,
            n_learners,
            d_learner: d_total / n_learners,
            p_b: Some(p_b),
            r: None,
            seed: cfg.seed,
            trial: Some(trial),
            metric: "accuracy".into(),
            value: acc,
        };
        out.push(SweepRow { metric: "flipped_bits".into(), value: flipped as f64, ..row.clone() });
        out.push(row);
    }
    Ok(out)
}
