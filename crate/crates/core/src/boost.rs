//! BoostHD: an ensemble of OnlineHD learners, each owning a contiguous slice
//! of one shared hyperdimensional encoding, trained sequentially with
//! multiclass AdaBoost (SAMME) sample weighting.

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::online_hd::{argmax, OnlineHdModel, TrainConfig};

pub const DEFAULT_ALPHA_CAP: f64 = 10.0;
pub const DEFAULT_LEARNERS: usize = 10;

/// A contiguous range `[offset, offset + width)` of the shared encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub offset: usize,
    pub width: usize,
}

impl Slice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

/// Split `d_total` dimensions into `n_learners` contiguous slices whose
/// widths differ by at most one; the first `d_total % n_learners` slices
/// get the extra dimension.
pub fn partition_dimensions(d_total: usize, n_learners: usize) -> Result<Vec<Slice>> {
    if n_learners == 0 || d_total == 0 {
        return Err(Error::ZeroDimension);
    }
    if d_total < n_learners {
        return Err(Error::TooManyLearners { d_total, n_learners });
    }
    let base = d_total / n_learners;
    let extra = d_total % n_learners;
    let mut offset = 0;
    Ok((0..n_learners)
        .map(|i| {
            let width = base + usize::from(i < extra);
            let s = Slice { offset, width };
            offset += width;
            s
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub n_learners: usize,
    pub d_total: usize,
    pub train: TrainConfig,
    pub alpha_cap: f64,
    /// Seed of the shared encoder.
    pub seed: u64,
    pub encoder: EncoderKind,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_learners: DEFAULT_LEARNERS,
            d_total: 1000,
            train: TrainConfig::default(),
            alpha_cap: DEFAULT_ALPHA_CAP,
            seed: 0,
            encoder: EncoderKind::CosSin,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_learners == 0 || self.d_total == 0 {
            return Err(Error::ZeroDimension);
        }
        if self.d_total < self.n_learners {
            return Err(Error::TooManyLearners { d_total: self.d_total, n_learners: self.n_learners });
        }
        if !(self.alpha_cap > 0.0 && self.alpha_cap.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha_cap must be positive, got {}", self.alpha_cap)));
        }
        Ok(())
    }
}

/// Which branch of the learner-weight rule fired in a boosting round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundBranch {
    Weighted,
    /// Zero weighted error: alpha set to the cap, weights reset to uniform.
    Perfect,
    /// Error at or above chance `1 - 1/L`: alpha 0, weights reset to uniform.
    Chance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub error: f64,
    pub alpha: f64,
    pub branch: RoundBranch,
}

/// SAMME learner weight for weighted error `error` over `n_classes` classes.
pub fn samme_alpha(error: f64, n_classes: usize, alpha_cap: f64) -> (f64, RoundBranch) {
    // a few ulps of slack so that an error of exactly (L-1)/L computed as a
    // weight sum still lands on the chance branch
    let chance = (1.0 - 1.0 / n_classes as f64) * (1.0 - 4.0 * f64::EPSILON);
    if error <= 0.0 {
        (alpha_cap, RoundBranch::Perfect)
    } else if error >= chance {
        (0.0, RoundBranch::Chance)
    } else {
        let a = ((1.0 - error) / error).ln() + (n_classes as f64 - 1.0).ln();
        (a.clamp(0.0, alpha_cap), RoundBranch::Weighted)
    }
}

/// Sample-weight state of the boosting recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SammeState {
    weights: Vec<f64>,
    n_classes: usize,
    alpha_cap: f64,
}

impl SammeState {
    pub fn new(n_samples: usize, n_classes: usize, alpha_cap: f64) -> Self {
        SammeState { weights: uniform(n_samples), n_classes, alpha_cap }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Apply one round given which samples the learner got wrong.
    pub fn step(&mut self, misclassified: &[bool]) -> RoundRecord {
        debug_assert_eq!(misclassified.len(), self.weights.len());
        let total: f64 = self.weights.iter().sum();
        let wrong: f64 = self.weights.iter().zip(misclassified).filter(|(_, &m)| m).map(|(w, _)| w).sum();
        let error = wrong / total;
        let (alpha, branch) = samme_alpha(error, self.n_classes, self.alpha_cap);
        match branch {
            RoundBranch::Weighted => {
                let boost = alpha.exp();
                for (w, &m) in self.weights.iter_mut().zip(misclassified) {
                    if m {
                        *w *= boost;
                    }
                }
                let z: f64 = self.weights.iter().sum();
                self.weights.iter_mut().for_each(|w| *w /= z);
            }
            RoundBranch::Perfect | RoundBranch::Chance => self.weights = uniform(self.weights.len()),
        }
        RoundRecord { error, alpha, branch }
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Drive `n_rounds` of SAMME. `train_round(i, weights)` returns a learner
/// and its predictions on the training labels.
pub fn boost_rounds<T, F>(
    labels: &[usize],
    n_classes: usize,
    n_rounds: usize,
    alpha_cap: f64,
    mut train_round: F,
) -> Result<(Vec<T>, Vec<RoundRecord>)>
where
    F: FnMut(usize, &[f64]) -> Result<(T, Vec<usize>)>,
{
    let mut state = SammeState::new(labels.len(), n_classes, alpha_cap);
    let mut learners = Vec::with_capacity(n_rounds);
    let mut records = Vec::with_capacity(n_rounds);
    for i in 0..n_rounds {
        let (learner, preds) = train_round(i, state.weights())?;
        if preds.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: preds.len() });
        }
        let miss: Vec<bool> = preds.iter().zip(labels).map(|(p, y)| p != y).collect();
        records.push(state.step(&miss));
        learners.push(learner);
    }
    Ok((learners, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostHdModel {
    pub(crate) encoder: EncoderParams,
    pub(crate) learners: Vec<OnlineHdModel>,
    pub(crate) alphas: Vec<f64>,
    pub(crate) partition: Vec<Slice>,
    pub(crate) n_classes: usize,
    pub(crate) train: TrainConfig,
    pub(crate) alpha_cap: f64,
    pub(crate) label_names: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BoostFit {
    pub model: BoostHdModel,
    pub rounds: Vec<RoundRecord>,
    /// Set when every round had alpha 0 and voting fell back to equal weights.
    pub equal_vote_fallback: bool,
}

impl BoostHdModel {
    /// Train the ensemble on raw features.
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, cfg: &BoostConfig) -> Result<BoostFit> {
        cfg.validate()?;
        if x.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch { expected: x.rows(), found: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidLabel { label, n_classes });
        }
        if n_classes < 2 || labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::SingleClassData);
        }
        let partition = partition_dimensions(cfg.d_total, cfg.n_learners)?;
        let encoder = EncoderParams::with_kind(x.cols(), cfg.d_total, cfg.seed, cfg.encoder)?;
        let encoded = encoder.encode_batch(x)?;

        let (learners, rounds) = boost_rounds(labels, n_classes, cfg.n_learners, cfg.alpha_cap, |i, w| {
            let slice = partition[i];
            let sub = encoded.column_slice(slice.offset, slice.width);
            let train = TrainConfig { shuffle_seed: cfg.train.shuffle_seed.wrapping_add(i as u64), ..cfg.train };
            let out = OnlineHdModel::fit(&sub, labels, n_classes, Some(w), &train)?;
            Ok((out.model, out.predictions))
        })?;

        let mut alphas: Vec<f64> = rounds.iter().map(|r| r.alpha).collect();
        let equal_vote_fallback = alphas.iter().all(|&a| a == 0.0);
        if equal_vote_fallback {
            alphas.iter_mut().for_each(|a| *a = 1.0);
        }
        let model = BoostHdModel {
            encoder,
            learners,
            alphas,
            partition,
            n_classes,
            train: cfg.train,
            alpha_cap: cfg.alpha_cap,
            label_names: (0..n_classes).map(|c| c.to_string()).collect(),
        };
        Ok(BoostFit { model, rounds, equal_vote_fallback })
    }

    /// Assemble a model from parts; checks every structural invariant.
    pub fn from_parts(
        encoder: EncoderParams,
        learners: Vec<OnlineHdModel>,
        alphas: Vec<f64>,
        train: TrainConfig,
        alpha_cap: f64,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let n = learners.len();
        if n == 0 || alphas.len() != n {
            return Err(Error::InvalidParams("learner and alpha counts differ or are zero".into()));
        }
        let n_classes = learners[0].n_classes();
        if label_names.len() != n_classes {
            return Err(Error::InvalidParams("label vocabulary size differs from class count".into()));
        }
        let mut partition = Vec::with_capacity(n);
        let mut offset = 0;
        for l in &learners {
            if l.n_classes() != n_classes {
                return Err(Error::InvalidParams("learners disagree on class count".into()));
            }
            partition.push(Slice { offset, width: l.dim() });
            offset += l.dim();
        }
        if offset != encoder.out_dim() {
            return Err(Error::InvalidParams("slices do not tile the encoder dimension".into()));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParams("non-finite learner weight".into()));
        }
        Ok(BoostHdModel { encoder, learners, alphas, partition, n_classes, train, alpha_cap, label_names })
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn learners(&self) -> &[OnlineHdModel] {
        &self.learners
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn partition(&self) -> &[Slice] {
        &self.partition
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.encoder.in_features()
    }

    pub fn d_total(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    pub fn alpha_cap(&self) -> f64 {
        self.alpha_cap
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn set_label_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n_classes {
            return Err(Error::SchemaMismatch(format!("{} label names for {} classes", names.len(), self.n_classes)));
        }
        self.label_names = names;
        Ok(())
    }

    /// Class hypervectors of all learners concatenated along the dimension
    /// axis: an `n_classes x d_total` matrix.
    pub fn concatenated_class_hvs(&self) -> Matrix {
        let d = self.d_total();
        let mut data = vec![0.0; self.n_classes * d];
        for (l, s) in self.learners.iter().zip(&self.partition) {
            for c in 0..self.n_classes {
                for (k, &v) in l.class_hv(c).iter().enumerate() {
                    data[c * d + s.offset + k] = v as f64;
                }
            }
        }
        Matrix::new(self.n_classes, d, data).expect("shape")
    }

    fn vote(&self, h: &[f64], norms: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
        let mut votes = vec![0.0; self.n_classes];
        for ((l, s), (alpha, ln)) in self.learners.iter().zip(&self.partition).zip(self.alphas.iter().zip(norms)) {
            let scores = l.scores_with_norms(&h[s.range()], ln)?;
            votes[argmax(&scores)] += alpha;
        }
        Ok((argmax(&votes), votes))
    }

    fn learner_norms(&self) -> Vec<Vec<f64>> {
        self.learners.iter().map(|l| l.class_norms()).collect()
    }

    /// Weighted vote of every learner on an already encoded query.
    pub fn predict_encoded(&self, h: &[f64]) -> Result<(usize, Vec<f64>)> {
        if h.len() != self.d_total() {
            return Err(Error::DimensionMismatch { expected: self.d_total(), found: h.len() });
        }
        self.vote(h, &self.learner_norms())
    }

    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let h = self.encoder.encode(x)?;
        self.predict_encoded(h.as_slice())
    }

    pub fn predict_batch_encoded(&self, encoded: &Matrix) -> Result<Vec<usize>> {
        if encoded.cols() != self.d_total() {
            return Err(Error::DimensionMismatch { expected: self.d_total(), found: encoded.cols() });
        }
        let norms = self.learner_norms();
        encoded.iter_rows().map(|h| self.vote(h, &norms).map(|(l, _)| l)).collect()
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.predict_batch_encoded(&self.encoder.encode_batch(x)?)
    }

    /// Every learner's label on an encoded query, in learner order.
    pub fn learner_predictions(&self, h: &[f64]) -> Result<Vec<usize>> {
        let norms = self.learner_norms();
        self.learners
            .iter()
            .zip(&self.partition)
            .zip(&norms)
            .map(|((l, s), n)| l.scores_with_norms(&h[s.range()], n).map(|sc| argmax(&sc)))
            .collect()
    }

    pub(crate) fn split_mut(&mut self) -> (&mut EncoderParams, &mut [OnlineHdModel]) {
        (&mut self.encoder, &mut self.learners)
    }
}
