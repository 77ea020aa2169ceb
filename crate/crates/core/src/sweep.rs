//! Experiment sweeps over dimensions, ensemble sizes, imbalance ratios and
//! fault rates, with long-format results and per-cell summaries.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{BoostConfig, BoostHdModel};
use crate::data::{accuracy, macro_accuracy, make_imbalanced, Dataset};
use crate::error::{Error, Result};
use crate::model_io::write_atomic;
use crate::online_hd::{HdClassifier, TrainConfig};
use crate::perturb::{mad, median, robustness_sweep, PerturbConfig};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const BOOSTHD: &str = "boosthd";
pub const ONLINEHD: &str = "onlinehd";

type CellKey = (String, usize, usize, usize, Option<u64>, Option<u64>, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Heatmap,
    Stability,
    Robustness,
    Overfit,
}

/// How a heatmap cell's dimension is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeatmapMode {
    /// Every learner gets the listed dimension; `D_total = d * N_L`.
    FixedPerLearner,
    /// The listed dimension is `D_total`, split among the learners.
    #[default]
    Divided,
}

/// One metric value with its full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub d_total: usize,
    pub n_learners: usize,
    pub d_learner: usize,
    pub p_b: Option<f64>,
    pub r: Option<f64>,
    pub seed: u64,
    pub trial: Option<u64>,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub d_total: usize,
    pub n_learners: usize,
    pub d_learner: usize,
    pub p_b: Option<f64>,
    pub r: Option<f64>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub mad: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub cells: Vec<CellSummary>,
    /// Per-model aggregates: `mu_sigma` (stability), `macro_accuracy_drop`
    /// (overfit), `mean_mad` (robustness).
    pub aggregates: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Append-only table of sweep rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub heatmap_mode: Option<HeatmapMode>,
    rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn new(kind: SweepKind) -> Self {
        SweepResult { kind, heatmap_mode: None, rows: Vec::new() }
    }

    pub fn push(&mut self, row: SweepRow) {
        self.rows.push(row);
    }

    pub fn append(&mut self, other: SweepResult) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    /// Rows with the given metric, in insertion order.
    pub fn metric_rows<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "model",
                "d_total",
                "n_learners",
                "d_learner",
                "p_b",
                "r",
                "seed",
                "trial",
                "metric",
                "value",
            ])?;
        }
        w.into_inner().map_err(|e| Error::InvalidFormat(e.to_string()))
    }

    /// Aggregate over seeds and trials, grouping by every other column.
    /// Cells appear in order of first occurrence.
    pub fn summary(&self) -> Result<SweepSummary> {
        let mut order: Vec<CellKey> = Vec::new();
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for r in &self.rows {
            let key = (
                r.model.clone(),
                r.d_total,
                r.n_learners,
                r.d_learner,
                r.p_b.map(f64::to_bits),
                r.r.map(f64::to_bits),
                r.metric.clone(),
            );
            match order.iter().position(|k| *k == key) {
                Some(i) => groups[i].push(r.value),
                None => {
                    order.push(key);
                    groups.push(vec![r.value]);
                }
            }
        }
        let cells = order
            .into_iter()
            .zip(groups)
            .map(|((model, d_total, n_learners, d_learner, p_b, r, metric), v)| {
                let (mean, std) = mean_std(&v);
                Ok(CellSummary {
                    model,
                    d_total,
                    n_learners,
                    d_learner,
                    p_b: p_b.map(f64::from_bits),
                    r: r.map(f64::from_bits),
                    metric,
                    n: v.len(),
                    mean,
                    std,
                    median: median(&v)?,
                    mad: mad(&v)?,
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregates = self.aggregates(&cells);
        Ok(SweepSummary { schema_version: SUMMARY_SCHEMA_VERSION, kind: self.kind, cells, aggregates })
    }

    fn aggregates(&self, cells: &[CellSummary]) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for model in models(cells) {
            let mine: Vec<&CellSummary> = cells.iter().filter(|c| c.model == model).collect();
            let entry = out.entry(model.clone()).or_default();
            match self.kind {
                SweepKind::Stability => {
                    let s: Vec<f64> = mine.iter().filter(|c| c.metric == "accuracy").map(|c| c.std).collect();
                    if !s.is_empty() {
                        entry.insert("mu_sigma".into(), s.iter().sum::<f64>() / s.len() as f64);
                    }
                }
                SweepKind::Overfit => {
                    let m: Vec<&&CellSummary> = mine.iter().filter(|c| c.metric == "macro_accuracy").collect();
                    let lo = m.iter().min_by(|a, b| a.r.unwrap_or(1.0).total_cmp(&b.r.unwrap_or(1.0)));
                    let hi = m.iter().max_by(|a, b| a.r.unwrap_or(1.0).total_cmp(&b.r.unwrap_or(1.0)));
                    if let (Some(lo), Some(hi)) = (lo, hi) {
                        entry.insert("macro_accuracy_drop".into(), lo.mean - hi.mean);
                    }
                }
                SweepKind::Robustness => {
                    let m: Vec<f64> = mine.iter().filter(|c| c.metric == "accuracy").map(|c| c.mad).collect();
                    if !m.is_empty() {
                        entry.insert("mean_mad".into(), m.iter().sum::<f64>() / m.len() as f64);
                    }
                }
                SweepKind::Heatmap => {}
            }
        }
        out
    }

    /// Plot-ready table: one row per x value, one column group per model.
    pub fn pivot_csv_bytes(&self) -> Result<Vec<u8>> {
        let summary = self.summary()?;
        let metric = match self.kind {
            SweepKind::Overfit => "macro_accuracy",
            _ => "accuracy",
        };
        let cells: Vec<&CellSummary> = summary.cells.iter().filter(|c| c.metric == metric).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        match self.kind {
            SweepKind::Heatmap => {
                let fixed = self.heatmap_mode == Some(HeatmapMode::FixedPerLearner);
                let col = |c: &CellSummary| if fixed { c.d_learner } else { c.d_total };
                let xs = unique(cells.iter().map(|c| col(c)));
                let ns = unique(cells.iter().map(|c| c.n_learners));
                let mut header =
                    vec![if fixed { "n_learners\\d_learner".to_string() } else { "n_learners\\d_total".to_string() }];
                header.extend(xs.iter().map(|x| x.to_string()));
                w.write_record(&header)?;
                for n in ns {
                    let mut rec = vec![n.to_string()];
                    for &x in &xs {
                        let v = cells.iter().find(|c| c.n_learners == n && col(c) == x);
                        rec.push(v.map(|c| c.mean.to_string()).unwrap_or_default());
                    }
                    w.write_record(&rec)?;
                }
            }
            kind => {
                let (xname, x): (&str, fn(&CellSummary) -> String) = match kind {
                    SweepKind::Stability => ("d_total", |c| c.d_total.to_string()),
                    SweepKind::Robustness => ("p_b", |c| fmt_opt(c.p_b)),
                    _ => ("r", |c| fmt_opt(c.r)),
                };
                let stats: &[&str] =
                    if kind == SweepKind::Robustness { &["mean", "median", "mad"] } else { &["mean", "std"] };
                let ms = models(&summary.cells);
                let mut header = vec![xname.to_string()];
                for m in &ms {
                    header.extend(stats.iter().map(|s| format!("{m}_{s}")));
                }
                w.write_record(&header)?;
                for xv in unique(cells.iter().map(|c| x(c))) {
                    let mut rec = vec![xv.clone()];
                    for m in &ms {
                        let c = cells.iter().find(|c| &c.model == m && x(c) == xv);
                        for s in stats {
                            rec.push(c.map(|c| stat(c, s).to_string()).unwrap_or_default());
                        }
                    }
                    w.write_record(&rec)?;
                }
            }
        }
        w.into_inner().map_err(|e| Error::InvalidFormat(e.to_string()))
    }

    /// Write `results.csv`, `summary.json` and `pivot.csv` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_atomic(&dir.join("results.csv"), &self.to_csv_bytes()?)?;
        let mut summary = serde_json::to_vec_pretty(&self.summary()?)?;
        summary.push(b'\n');
        write_atomic(&dir.join("summary.json"), &summary)?;
        write_atomic(&dir.join("pivot.csv"), &self.pivot_csv_bytes()?)
    }
}

fn stat(c: &CellSummary, s: &str) -> f64 {
    match s {
        "mean" => c.mean,
        "std" => c.std,
        "median" => c.median,
        _ => c.mad,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn unique<T: PartialEq>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for v in it {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn models(cells: &[CellSummary]) -> Vec<String> {
    unique(cells.iter().map(|c| c.model.clone()))
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Model settings shared by every sweep cell. Dimension, ensemble size and
/// seed are set per cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub base: BoostConfig,
}

impl ModelTemplate {
    pub fn new(base: BoostConfig) -> Self {
        ModelTemplate { base }
    }

    /// Ensemble config for one cell; `seed` drives the encoder and the
    /// shuffle order.
    pub fn boost_config(&self, d_total: usize, n_learners: usize, seed: u64) -> BoostConfig {
        BoostConfig {
            d_total,
            n_learners,
            seed,
            train: TrainConfig { shuffle_seed: seed, ..self.base.train },
            ..self.base
        }
    }

    pub fn fit_boost(&self, train: &Dataset, d_total: usize, n_learners: usize, seed: u64) -> Result<BoostHdModel> {
        let cfg = self.boost_config(d_total, n_learners, seed);
        Ok(BoostHdModel::fit(&train.x, &train.y, train.n_classes(), &cfg)?.model)
    }

    /// Standalone OnlineHD with the same encoder and shuffle seeds as a
    /// one-learner ensemble.
    pub fn fit_single(&self, train: &Dataset, d_total: usize, seed: u64) -> Result<HdClassifier> {
        let cfg = self.boost_config(d_total, 1, seed);
        let (clf, _) =
            HdClassifier::fit(&train.x, &train.y, train.n_classes(), d_total, seed, cfg.encoder, &cfg.train)?;
        Ok(clf)
    }
}

fn row(model: &str, d_total: usize, n_learners: usize, seed: u64, metric: &str, value: f64) -> SweepRow {
    SweepRow {
        model: model.to_string(),
        d_total,
        n_learners,
        d_learner: d_total / n_learners,
        p_b: None,
        r: None,
        seed,
        trial: None,
        metric: metric.to_string(),
        value,
    }
}

fn check_nonempty<T>(v: &[T], what: &'static str) -> Result<()> {
    if v.is_empty() {
        Err(Error::InvalidParams(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

/// Test accuracy of BoostHD(D, N_L) and OnlineHD(D) for every D and seed.
pub fn stability_sweep(
    train: &Dataset,
    test: &Dataset,
    d_values: &[usize],
    n_learners: usize,
    seeds: &[u64],
    tmpl: &ModelTemplate,
) -> Result<SweepResult> {
    check_nonempty(d_values, "d_values")?;
    check_nonempty(seeds, "seeds")?;
    if let Some(&d) = d_values.iter().find(|&&d| d < n_learners) {
        return Err(Error::TooManyLearners { d_total: d, n_learners });
    }
    let cells: Vec<(usize, u64)> = d_values.iter().flat_map(|&d| seeds.iter().map(move |&s| (d, s))).collect();
    let rows: Vec<[SweepRow; 2]> = cells
        .par_iter()
        .map(|&(d, seed)| {
            let b = tmpl.fit_boost(train, d, n_learners, seed)?;
            let o = tmpl.fit_single(train, d, seed)?;
            Ok([
                row(BOOSTHD, d, n_learners, seed, "accuracy", accuracy(&test.y, &b.predict_batch(&test.x)?)?),
                row(ONLINEHD, d, 1, seed, "accuracy", accuracy(&test.y, &o.predict_batch(&test.x)?)?),
            ])
        })
        .collect::<Result<_>>()?;
    let mut out = SweepResult::new(SweepKind::Stability);
    // boosthd rows first so the summary lists one model then the other
    let (b, o): (Vec<_>, Vec<_>) = rows.into_iter().map(|[b, o]| (b, o)).unzip();
    b.into_iter().chain(o).for_each(|r| out.push(r));
    Ok(out)
}

/// BoostHD test accuracy over an `N_L x D` grid for every seed.
pub fn heatmap_sweep(
    train: &Dataset,
    test: &Dataset,
    n_learner_values: &[usize],
    d_values: &[usize],
    mode: HeatmapMode,
    seeds: &[u64],
    tmpl: &ModelTemplate,
) -> Result<SweepResult> {
    check_nonempty(n_learner_values, "n_learner_values")?;
    check_nonempty(d_values, "d_values")?;
    check_nonempty(seeds, "seeds")?;
    let mut cells = Vec::new();
    for &n in n_learner_values {
        for &d in d_values {
            let d_total = match mode {
                HeatmapMode::FixedPerLearner => {
                    d.checked_mul(n).ok_or(Error::InvalidParams("dimension overflow".into()))?
                }
                HeatmapMode::Divided => d,
            };
            if n == 0 || d_total < n {
                return Err(Error::TooManyLearners { d_total, n_learners: n });
            }
            cells.extend(seeds.iter().map(|&s| (n, d_total, s)));
        }
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(n, d_total, seed)| {
            let m = tmpl.fit_boost(train, d_total, n, seed)?;
            Ok(row(BOOSTHD, d_total, n, seed, "accuracy", accuracy(&test.y, &m.predict_batch(&test.x)?)?))
        })
        .collect::<Result<_>>()?;
    let mut out = SweepResult::new(SweepKind::Heatmap);
    out.heatmap_mode = Some(mode);
    rows.into_iter().for_each(|r| out.push(r));
    Ok(out)
}

/// Macro accuracy on a balanced test set after training on imbalanced
/// copies of `train` at every ratio `r`.
#[allow(clippy::too_many_arguments)]
pub fn overfit_sweep(
    train: &Dataset,
    test: &Dataset,
    target_class: usize,
    r_values: &[f64],
    d_total: usize,
    n_learners: usize,
    seeds: &[u64],
    tmpl: &ModelTemplate,
) -> Result<SweepResult> {
    check_nonempty(r_values, "r_values")?;
    check_nonempty(seeds, "seeds")?;
    if let Some(&r) = r_values.iter().find(|&&r| r.is_nan() || r < 1.0 || !r.is_finite()) {
        return Err(Error::InvalidRatio(r));
    }
    if d_total < n_learners {
        return Err(Error::TooManyLearners { d_total, n_learners });
    }
    let cells: Vec<(f64, u64)> = r_values.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let rows: Vec<[SweepRow; 2]> = cells
        .par_iter()
        .map(|&(r, seed)| {
            let imb = make_imbalanced(train, target_class, r, seed)?;
            let b = tmpl.fit_boost(&imb, d_total, n_learners, seed)?;
            let o = tmpl.fit_single(&imb, d_total, seed)?;
            let mb = macro_accuracy(&test.y, &b.predict_batch(&test.x)?)?;
            let mo = macro_accuracy(&test.y, &o.predict_batch(&test.x)?)?;
            Ok([
                SweepRow { r: Some(r), ..row(BOOSTHD, d_total, n_learners, seed, "macro_accuracy", mb) },
                SweepRow { r: Some(r), ..row(ONLINEHD, d_total, 1, seed, "macro_accuracy", mo) },
            ])
        })
        .collect::<Result<_>>()?;
    let mut out = SweepResult::new(SweepKind::Overfit);
    let (b, o): (Vec<_>, Vec<_>) = rows.into_iter().map(|[b, o]| (b, o)).unzip();
    b.into_iter().chain(o).for_each(|r| out.push(r));
    Ok(out)
}

/// Trains BoostHD(D_total, N_L) and OnlineHD(D_total) per seed and runs
/// [`robustness_sweep`] on both. Each model seed is also its fault seed.
#[allow(clippy::too_many_arguments)]
pub fn robustness_grid(
    train: &Dataset,
    test: &Dataset,
    d_total: usize,
    n_learners: usize,
    p_b_values: &[f64],
    seeds: &[u64],
    perturb: &PerturbConfig,
    tmpl: &ModelTemplate,
) -> Result<SweepResult> {
    check_nonempty(p_b_values, "p_b_values")?;
    check_nonempty(seeds, "seeds")?;
    let mut boost = SweepResult::new(SweepKind::Robustness);
    let mut single = SweepResult::new(SweepKind::Robustness);
    for &seed in seeds {
        let cfg = PerturbConfig { seed, ..*perturb };
        let b = tmpl.fit_boost(train, d_total, n_learners, seed)?;
        boost.append(robustness_sweep(&b, BOOSTHD, test, p_b_values, &cfg)?);
        let o = tmpl.fit_single(train, d_total, seed)?;
        single.append(robustness_sweep(&o, ONLINEHD, test, p_b_values, &cfg)?);
    }
    boost.append(single);
    Ok(boost)
}
