//! Dataset ingestion, windowed feature extraction, normalization, subject
//! splits, imbalance construction, synthetic blobs and evaluation metrics.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub subjects: Vec<String>,
    pub feature_names: Vec<String>,
    /// Label vocabulary: `label_names[c]` is the original label of class `c`.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        subjects: Vec<String>,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let n = x.rows();
        if y.len() != n {
            return Err(Error::LengthMismatch(n, y.len()));
        }
        if subjects.len() != n {
            return Err(Error::LengthMismatch(n, subjects.len()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::LengthMismatch(x.cols(), feature_names.len()));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::InvalidLabel { label, n_classes: label_names.len() });
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Dataset { x, y, subjects, feature_names, label_names })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        }
    }

    /// Distinct subject ids in first-appearance order.
    pub fn subject_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.subjects.iter().filter(|s| seen.insert(s.as_str())).cloned().collect()
    }

    /// Re-express labels in another vocabulary (e.g. a trained model's).
    pub fn remap_labels(&self, vocabulary: &[String]) -> Result<Dataset> {
        let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let y = self
            .y
            .iter()
            .map(|&l| {
                let name = &self.label_names[l];
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::SchemaMismatch(format!("label {name:?} is not in the model vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { y, label_names: vocabulary.to_vec(), ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Feature columns; `None` takes every column except label and subject.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    pub label: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { features: None, label: "label".into(), subject: Some("subject".into()), delimiter: ',' }
    }
}

fn csv_reader(path: &Path, delimiter: char) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().delimiter(delimiter as u8).has_headers(true).from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_owned()))
}

fn parse_cell(rec: &csv::StringRecord, row: usize, col: usize) -> Result<f64> {
    let raw = rec.get(col).unwrap_or("");
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::UnparseableCell { row, column: col, value: raw.to_owned() }),
    }
}

/// Load a feature CSV. Row order is preserved; labels are mapped to
/// `0..L` in order of first appearance. Without a subject column every row
/// belongs to subject `"0"`.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path, schema.delimiter)?;
    let headers = rdr.headers()?.clone();
    let label_col = column_index(&headers, &schema.label)?;
    let subject_col = schema.subject.as_deref().map(|s| column_index(&headers, s)).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| column_index(&headers, n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != label_col && Some(c) != subject_col).collect(),
    };
    let feature_names = feature_cols.iter().map(|&c| headers[c].to_owned()).collect();

    let mut vocab: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut subjects = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &c in &feature_cols {
            data.push(parse_cell(&rec, row, c)?);
        }
        let label = rec.get(label_col).unwrap_or("").trim().to_owned();
        if label.is_empty() {
            return Err(Error::UnparseableCell { row, column: label_col, value: label });
        }
        let id = *lookup.entry(label.clone()).or_insert_with(|| {
            vocab.push(label);
            vocab.len() - 1
        });
        y.push(id);
        subjects.push(subject_col.map_or_else(|| "0".to_owned(), |c| rec.get(c).unwrap_or("").to_owned()));
    }
    let x = Matrix::new(y.len(), feature_cols.len(), data)?;
    Dataset::new(x, y, subjects, feature_names, vocab)
}

/// Write a dataset as CSV: feature columns, then `label`, then `subject`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    crate::model_io::write_atomic(path.as_ref(), &csv_bytes(ds)?)
}

/// The bytes [`write_csv`] writes.
pub fn csv_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.extend(["label", "subject"]);
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(ds.label_names[ds.y[i]].clone());
        rec.push(ds.subjects[i].clone());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::InvalidFormat(e.to_string()))
}

/// Sidecar manifest written next to cached dataset CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub preprocessing: serde_json::Value,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub dropped_features: Vec<String>,
    pub rows: usize,
}

/// One subject's synchronized multichannel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    /// `(channel name, samples)` in column order; all equally long.
    pub channels: Vec<(String, Vec<f64>)>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub subject_id: String,
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        for (_, s) in &self.channels {
            if s.len() != self.labels.len() {
                return Err(Error::LengthMismatch(self.labels.len(), s.len()));
            }
        }
        Ok(())
    }
}

/// Load a raw time-series CSV (one row per timestep) and group it into one
/// recording per subject, in subject first-appearance order. All recordings
/// share one label vocabulary.
pub fn load_raw_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<RawRecording>> {
    let ds = load_csv(path, schema)?;
    let mut out = Vec::new();
    for subject in ds.subject_ids() {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.subjects[i] == subject).collect();
        let part = ds.select(&idx);
        let channels = (0..part.n_features())
            .map(|c| (part.feature_names[c].clone(), part.x.iter_rows().map(|r| r[c]).collect()))
            .collect();
        out.push(RawRecording { channels, labels: part.y, label_names: ds.label_names.clone(), subject_id: subject });
    }
    Ok(out)
}

/// Per-window `min, max, mean, std` (population) of every channel.
///
/// Windows start at `0, stride, 2*stride, ...` and the label of a window is
/// its majority timestep label, ties going to the most recent label.
pub fn moving_window_features(rec: &RawRecording, window: usize, stride: usize) -> Result<Dataset> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidParams("window and stride must be positive".into()));
    }
    rec.validate()?;
    let t = rec.len();
    if t < window {
        return Err(Error::WindowTooLarge { len: t, window });
    }
    let n_windows = (t - window) / stride + 1;
    let n_feat = 4 * rec.channels.len();
    let mut data = Vec::with_capacity(n_windows * n_feat);
    let mut y = Vec::with_capacity(n_windows);
    for k in 0..n_windows {
        let start = k * stride;
        for (_, series) in &rec.channels {
            let [mn, mx, mean, std] = window_stats(&series[start..start + window]);
            data.extend([mn, mx, mean, std]);
        }
        y.push(majority_label(&rec.labels[start..start + window]));
    }
    let feature_names = rec
        .channels
        .iter()
        .flat_map(|(name, _)| ["min", "max", "mean", "std"].map(|s| format!("{name}_{s}")))
        .collect();
    Dataset::new(
        Matrix::new(n_windows, n_feat, data)?,
        y,
        vec![rec.subject_id.clone(); n_windows],
        feature_names,
        rec.label_names.clone(),
    )
}

/// `[min, max, mean, population std]` with left-to-right summation.
pub fn window_stats(w: &[f64]) -> [f64; 4] {
    let mut mn = f64::INFINITY;
    let mut mx = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in w {
        mn = mn.min(v);
        mx = mx.max(v);
        sum += v;
    }
    let n = w.len() as f64;
    let mean = sum / n;
    let mut ss = 0.0;
    for &v in w {
        ss += (v - mean) * (v - mean);
    }
    [mn, mx, mean, (ss / n).sqrt()]
}

fn majority_label(labels: &[usize]) -> usize {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    // most recent label among the tied
    *labels.iter().rev().find(|l| counts[l] == best).expect("non-empty window")
}

/// Windowed features for many recordings, concatenated in order.
pub fn windows_for_all(recs: &[RawRecording], window: usize, stride: usize) -> Result<Dataset> {
    let parts = recs.iter().map(|r| moving_window_features(r, window, stride)).collect::<Result<Vec<_>>>()?;
    concat(&parts)
}

pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts.first().ok_or(Error::EmptyDataset)?;
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut subjects = Vec::new();
    for p in parts {
        if p.feature_names != first.feature_names || p.label_names != first.label_names {
            return Err(Error::SchemaMismatch("datasets have different columns or labels".into()));
        }
        data.extend_from_slice(p.x.as_slice());
        y.extend_from_slice(&p.y);
        subjects.extend(p.subjects.iter().cloned());
    }
    Dataset::new(
        Matrix::new(y.len(), first.n_features(), data)?,
        y,
        subjects,
        first.feature_names.clone(),
        first.label_names.clone(),
    )
}

/// Per-feature z-score statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// Indices (into the fitted dataset's columns) of retained features.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Names of constant features that were dropped.
    pub dropped: Vec<String>,
    pub n_input_features: usize,
}

pub fn fit_normalizer(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = train.len() as f64;
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..train.n_features() {
        let col: Vec<f64> = train.x.iter_rows().map(|r| r[c]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if std > 0.0 {
            kept.push(c);
            means.push(mean);
            stds.push(std);
        } else {
            dropped.push(train.feature_names[c].clone());
        }
    }
    Ok(NormStats { kept, means, stds, dropped, n_input_features: train.n_features() })
}

/// Z-score `ds` with previously fitted statistics, dropping the features
/// that were constant at fit time.
pub fn apply_normalizer(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if ds.n_features() != stats.n_input_features {
        return Err(Error::DimensionMismatch { expected: stats.n_input_features, found: ds.n_features() });
    }
    let x = ds.x.select_columns(&stats.kept);
    let mut data = x.as_slice().to_vec();
    let k = stats.kept.len();
    for (i, v) in data.iter_mut().enumerate() {
        let c = i % k;
        *v = (*v - stats.means[c]) / stats.stds[c];
    }
    Ok(Dataset {
        x: Matrix::new(ds.len(), k, data)?,
        feature_names: stats.kept.iter().map(|&c| ds.feature_names[c].clone()).collect(),
        ..ds.clone()
    })
}

/// Partition rows by subject id; rows of `test_subjects` form the test split.
pub fn split_by_subject(ds: &Dataset, test_subjects: &[String]) -> Result<(Dataset, Dataset)> {
    if test_subjects.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let present: BTreeSet<&str> = ds.subjects.iter().map(String::as_str).collect();
    if let Some(s) = test_subjects.iter().find(|s| !present.contains(s.as_str())) {
        return Err(Error::UnknownSubject(s.clone()));
    }
    let test_set: BTreeSet<&str> = test_subjects.iter().map(String::as_str).collect();
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| test_set.contains(ds.subjects[i].as_str()));
    if train_idx.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

/// Imbalanced training set: rows of `target_class` are kept once, every
/// other row is replicated `floor(r)` times plus once more with probability
/// `frac(r)`. The result is shuffled with `seed`.
///
/// This reads the imbalance factor as replication of the non-target
/// classes. The other plausible reading, subsampling non-target classes to
/// a fraction `r < 1`, is not implemented.
pub fn make_imbalanced(ds: &Dataset, target_class: usize, r: f64, seed: u64) -> Result<Dataset> {
    if r.is_nan() || r < 1.0 || !r.is_finite() {
        return Err(Error::InvalidRatio(r));
    }
    if !ds.y.contains(&target_class) {
        return Err(Error::UnknownClass(target_class));
    }
    let whole = r.floor() as usize;
    let frac = r - r.floor();
    let mut rng = rng::seeded(seed);
    let mut idx = Vec::new();
    for i in 0..ds.len() {
        if ds.y[i] == target_class {
            idx.push(i);
        } else {
            let extra = usize::from(frac > 0.0 && rng.random::<f64>() < frac);
            idx.extend(std::iter::repeat_n(i, whole + extra));
        }
    }
    idx.shuffle(&mut rng);
    Ok(ds.select(&idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub n_features: usize,
    pub separation: f64,
    pub noise_std: f64,
    /// Rows are assigned to pseudo-subjects `s0, s1, ...` round-robin.
    pub n_subjects: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 3,
            n_per_class: 100,
            n_features: 4,
            separation: 2.0,
            noise_std: 0.5,
            n_subjects: 4,
            seed: 0,
        }
    }
}

/// Gaussian blobs: class `c` is centred at `separation * u_c`.
///
/// The directions `u_c` are the coordinate axes when there are no more
/// classes than features, otherwise fixed pseudo-random unit vectors that do
/// not depend on `seed`. Rows are grouped by class.
pub fn synth_blobs(cfg: &SynthConfig) -> Result<Dataset> {
    let SynthConfig { n_classes, n_per_class, n_features, separation, noise_std, n_subjects, seed } = *cfg;
    if n_classes < 2 || n_per_class == 0 || n_features == 0 || n_subjects == 0 {
        return Err(Error::InvalidParams("blobs need >= 2 classes, >= 1 row per class, feature and subject".into()));
    }
    if noise_std.is_nan() || noise_std <= 0.0 || !separation.is_finite() || !noise_std.is_finite() {
        return Err(Error::InvalidParams("noise_std must be positive and separation finite".into()));
    }
    let directions = blob_directions(n_classes, n_features);
    let mut r = rng::stream(seed, 0);
    let mut data = Vec::with_capacity(n_classes * n_per_class * n_features);
    let mut y = Vec::new();
    let mut subjects = Vec::new();
    for (c, u) in directions.iter().enumerate() {
        for j in 0..n_per_class {
            for &uf in u {
                let z: f64 = StandardNormal.sample(&mut r);
                data.push(separation * uf + noise_std * z);
            }
            y.push(c);
            subjects.push(format!("s{}", j % n_subjects));
        }
    }
    Dataset::new(
        Matrix::new(y.len(), n_features, data)?,
        y,
        subjects,
        (0..n_features).map(|f| format!("f{f}")).collect(),
        (0..n_classes).map(|c| c.to_string()).collect(),
    )
}

fn blob_directions(n_classes: usize, n_features: usize) -> Vec<Vec<f64>> {
    if n_classes <= n_features {
        return (0..n_classes).map(|c| (0..n_features).map(|f| if f == c { 1.0 } else { 0.0 }).collect()).collect();
    }
    let mut r = rng::stream(0x5EED_D1EC, 0);
    (0..n_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..n_features).map(|_| StandardNormal.sample(&mut r)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect()
}

fn check_pair(y_true: &[usize], y_pred: &[usize]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Recall of every class `0..n_classes`; `None` for classes absent from
/// `y_true`.
pub fn per_class_recall(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    check_pair(y_true, y_pred)?;
    let mut total = vec![0usize; n_classes];
    let mut hit = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes {
            return Err(Error::InvalidLabel { label: t, n_classes });
        }
        total[t] += 1;
        if t == p {
            hit[t] += 1;
        }
    }
    Ok(total.iter().zip(&hit).map(|(&t, &h)| (t > 0).then(|| h as f64 / t as f64)).collect())
}

/// Unweighted mean of per-class recall over the classes present in `y_true`.
pub fn macro_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let n_classes = y_true.iter().chain(y_pred).max().map_or(0, |m| m + 1);
    let recalls: Vec<f64> = per_class_recall(y_true, y_pred, n_classes)?.into_iter().flatten().collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// `matrix[true][pred]` counts.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    check_pair(y_true, y_pred)?;
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidLabel { label: t.max(p), n_classes });
        }
        m[t][p] += 1;
    }
    Ok(m)
}
