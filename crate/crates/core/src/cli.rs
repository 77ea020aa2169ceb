//! Command-line front end: training, evaluation, sweeps, analyses and
//! dataset preparation.
//!
//! Every command resolves a JSON run config (file values overridden by
//! flags), computes all results, and only then writes them into its run
//! directory. Result files are byte-deterministic; wall-clock timings go to
//! a separate `timing.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boost::{BoostConfig, BoostHdModel, RoundRecord};
use crate::data::{
    accuracy, apply_normalizer, confusion_matrix, csv_bytes, fit_normalizer, load_csv, load_raw_csv, macro_accuracy,
    per_class_recall, split_by_subject, synth_blobs, windows_for_all, CsvSchema, Dataset, DatasetManifest, SynthConfig,
};
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::model_io::{load_model, to_bytes, write_atomic};
use crate::online_hd::HdClassifier;
use crate::perturb::PerturbConfig;
use crate::spectral::{
    limit_terms, monte_carlo_spectrum, mp_bounds, mp_mean_approx, mp_moments_numeric, mp_variance_approx,
    span_utilization, MpParams, SpanReport, SpectralStats, DEFAULT_RANK_TOLERANCE,
};
use crate::sweep::{
    heatmap_sweep, overfit_sweep, robustness_grid, stability_sweep, HeatmapMode, ModelTemplate, SweepResult,
};

pub const CONFIG_FORMAT_VERSION: u32 = 1;
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "boosthd", version, about = "Boosted hyperdimensional computing benchmarks")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, env = "BOOSTHD_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its metrics.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Run a parameter sweep.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Span-utilization or spectral analysis.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Prepare or generate datasets.
    #[command(subcommand)]
    Data(DataCommand),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// JSON run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (default: <out-root>/<command>-<config hash>-<timestamp>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root for generated run directories.
    #[arg(long, env = "BOOSTHD_OUT", default_value = "runs")]
    pub out_root: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training CSV (default: synthetic blobs).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test CSV.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Label column name.
    #[arg(long)]
    pub label_col: Option<String>,
    /// Subject column name.
    #[arg(long)]
    pub subject_col: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub d_total: Option<usize>,
    #[arg(long)]
    pub n_learners: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Encoder seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long)]
    pub alpha_cap: Option<f64>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderArg {
    CosSin,
    Cos,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::CosSin => EncoderKind::CosSin,
            EncoderArg::Cos => EncoderKind::Cos,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Train one standalone OnlineHD model (requires --n-learners 1).
    #[arg(long)]
    pub single: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub output: OutputArgs,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long)]
    pub subject_col: Option<String>,
    /// Only evaluate rows of these subjects.
    #[arg(long, value_delimiter = ',')]
    pub filter: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepCommon {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha_cap: Option<f64>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    /// Model seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// Accuracy over an ensemble-size by dimension grid.
    Heatmap {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long, value_delimiter = ',')]
        n_learners: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        d_values: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Accuracy spread over seeds as a function of dimension.
    Stability {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long, value_delimiter = ',')]
        d_values: Option<Vec<usize>>,
        #[arg(long)]
        n_learners: Option<usize>,
    },
    /// Accuracy under bit-flip faults.
    Robustness {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long)]
        d_total: Option<usize>,
        #[arg(long)]
        n_learners: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        p_b: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        include_encoder: bool,
    },
    /// Macro accuracy under class imbalance.
    Overfit {
        #[command(flatten)]
        common: SweepCommon,
        #[arg(long)]
        target_class: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        r_values: Option<Vec<f64>>,
        #[arg(long)]
        d_total: Option<usize>,
        #[arg(long)]
        n_learners: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    FixedPerLearner,
    Divided,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Span utilization of one model, or a comparison of two.
    Span {
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Second model to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        rank_tol: Option<f64>,
    },
    /// Marchenko-Pastur statistics and limit terms.
    Spectral {
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        limit_q: Option<Vec<f64>>,
        /// Rows of the Monte Carlo matrices (0 disables).
        #[arg(long)]
        mc_rows: Option<usize>,
        #[arg(long)]
        mc_seeds: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Window a raw time-series CSV, split by subject and z-score.
    Prep {
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        subject_col: Option<String>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        test_subjects: Option<Vec<String>>,
    },
    /// Generate Gaussian-blob train and test CSVs.
    Synth {
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long)]
        n_classes: Option<usize>,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        n_test_per_class: Option<usize>,
        #[arg(long)]
        n_features: Option<usize>,
        #[arg(long)]
        separation: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        n_subjects: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

// ---------------------------------------------------------------- configs

/// Where a command's data comes from: CSV files, or synthetic blobs when no
/// training file is given (the test split then uses `synth.seed + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSource {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: CsvSchema,
    pub synth: SynthConfig,
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource {
            train: None,
            test: None,
            schema: CsvSchema::default(),
            synth: SynthConfig { noise_std: 0.3, ..SynthConfig::default() },
        }
    }
}

impl DataSource {
    fn apply(&mut self, a: &DataArgs) {
        set(&mut self.train, a.train.clone().map(Some));
        set(&mut self.test, a.test.clone().map(Some));
        set(&mut self.schema.label, a.label_col.clone());
        set(&mut self.schema.subject, a.subject_col.clone().map(Some));
    }

    /// Training set and optional test set, the latter in the training
    /// label vocabulary.
    pub fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        match &self.train {
            Some(path) => {
                let train = load_csv(path, &self.schema)?;
                let test = match &self.test {
                    Some(p) => Some(conform(load_csv(p, &self.schema)?, &train)?),
                    None => None,
                };
                Ok((train, test))
            }
            None => {
                let train = synth_blobs(&self.synth)?;
                let test = synth_blobs(&SynthConfig { seed: self.synth.seed.wrapping_add(1), ..self.synth })?;
                Ok((train, Some(test)))
            }
        }
    }

    fn load_with_test(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.load()?;
        Ok((train, test.ok_or_else(|| Error::Config("a test dataset is required".into()))?))
    }
}

fn conform(ds: Dataset, reference: &Dataset) -> Result<Dataset> {
    if ds.feature_names != reference.feature_names {
        return Err(Error::SchemaMismatch(format!(
            "feature columns {:?} differ from {:?}",
            ds.feature_names, reference.feature_names
        )));
    }
    ds.remap_labels(&reference.label_names)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub format_version: u32,
    pub data: DataSource,
    pub model: BoostConfig,
    pub single: bool,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            data: DataSource::default(),
            model: BoostConfig::default(),
            single: false,
        }
    }
}

fn apply_model_args(m: &mut BoostConfig, a: &ModelArgs) {
    set(&mut m.d_total, a.d_total);
    set(&mut m.n_learners, a.n_learners);
    set(&mut m.train.lr, a.lr);
    set(&mut m.train.epochs, a.epochs);
    set(&mut m.seed, a.seed);
    set(&mut m.train.shuffle_seed, a.shuffle_seed);
    set(&mut m.alpha_cap, a.alpha_cap);
    set(&mut m.encoder, a.encoder.map(Into::into));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalRunConfig {
    pub format_version: u32,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub schema: CsvSchema,
    pub filter: Option<Vec<String>>,
}

impl Default for EvalRunConfig {
    fn default() -> Self {
        EvalRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            model: None,
            data: None,
            schema: CsvSchema::default(),
            filter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepRunConfig<P> {
    pub format_version: u32,
    pub data: DataSource,
    /// Learning rate, epochs, alpha cap and encoder kind shared by every
    /// cell; dimensions, ensemble size and seeds come from the grid.
    pub model: BoostConfig,
    pub seeds: Vec<u64>,
    pub params: P,
}

impl<P: Default> Default for SweepRunConfig<P> {
    fn default() -> Self {
        SweepRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            data: DataSource::default(),
            model: BoostConfig::default(),
            seeds: (0..10).collect(),
            params: P::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapParams {
    pub n_learners: Vec<usize>,
    pub d_values: Vec<usize>,
    pub mode: HeatmapMode,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        HeatmapParams { n_learners: vec![1, 10, 100], d_values: vec![500, 1000, 2000], mode: HeatmapMode::Divided }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityParams {
    pub d_values: Vec<usize>,
    pub n_learners: usize,
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams { d_values: vec![500, 1000, 2000, 4000], n_learners: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessParams {
    pub d_total: usize,
    pub n_learners: usize,
    pub p_b: Vec<f64>,
    pub trials: usize,
    pub include_encoder: bool,
}

impl Default for RobustnessParams {
    fn default() -> Self {
        RobustnessParams {
            d_total: 1000,
            n_learners: 10,
            p_b: vec![0.0, 1e-6, 1e-5, 1e-4],
            trials: 100,
            include_encoder: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverfitParams {
    pub target_class: usize,
    pub r_values: Vec<f64>,
    pub d_total: usize,
    pub n_learners: usize,
}

impl Default for OverfitParams {
    fn default() -> Self {
        OverfitParams { target_class: 0, r_values: vec![1.0, 2.0, 4.0, 8.0], d_total: 1000, n_learners: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpanRunConfig {
    pub format_version: u32,
    pub model: Option<PathBuf>,
    pub compare: Option<PathBuf>,
    pub rank_tol: f64,
}

impl Default for SpanRunConfig {
    fn default() -> Self {
        SpanRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            model: None,
            compare: None,
            rank_tol: DEFAULT_RANK_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralRunConfig {
    pub format_version: u32,
    pub q: Vec<f64>,
    pub sigma: f64,
    pub tol: f64,
    pub limit_q: Vec<f64>,
    pub mc_rows: usize,
    pub mc_seeds: usize,
}

impl Default for SpectralRunConfig {
    fn default() -> Self {
        SpectralRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            q: vec![0.25],
            sigma: 1.0,
            tol: 1e-9,
            limit_q: vec![10.0, 100.0, 1000.0],
            mc_rows: 0,
            mc_seeds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepRunConfig {
    pub format_version: u32,
    pub raw: Option<PathBuf>,
    pub schema: CsvSchema,
    pub window: usize,
    pub stride: usize,
    pub test_subjects: Vec<String>,
}

impl Default for PrepRunConfig {
    fn default() -> Self {
        PrepRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            raw: None,
            schema: CsvSchema::default(),
            window: 30,
            stride: 30,
            test_subjects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthRunConfig {
    pub format_version: u32,
    pub synth: SynthConfig,
    pub n_test_per_class: usize,
}

impl Default for SynthRunConfig {
    fn default() -> Self {
        SynthRunConfig {
            format_version: CONFIG_FORMAT_VERSION,
            synth: DataSource::default().synth,
            n_test_per_class: 100,
        }
    }
}

/// Read `path` as a config of type `T`, or take the defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(v) = value.get("format_version") {
        if v.as_u64() != Some(CONFIG_FORMAT_VERSION as u64) {
            return Err(Error::Config(format!("unsupported config format_version {v}")));
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Canonical JSON bytes of a config (pretty, trailing newline).
pub fn config_bytes<T: Serialize>(cfg: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(cfg)?;
    b.push(b'\n');
    Ok(b)
}

/// Hex SHA-256 of the canonical config bytes.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let digest = Sha256::digest(config_bytes(cfg)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Explicit `--out`, or a fresh directory under the output root.
pub fn resolve_run_dir<T: Serialize>(command: &str, out: &OutputArgs, cfg: &T) -> Result<PathBuf> {
    if let Some(dir) = &out.out {
        return Ok(dir.clone());
    }
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    Ok(out.out_root.join(format!("{command}-{}-{stamp}", &config_hash(cfg)?[..16])))
}

/// Collects output files and writes them only once everything succeeded.
struct RunOutput {
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new<T: Serialize>(cfg: &T) -> Result<Self> {
        Ok(RunOutput { files: vec![("config.json".into(), config_bytes(cfg)?)] })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut b = serde_json::to_vec_pretty(value)?;
        b.push(b'\n');
        self.files.push((name.into(), b));
        Ok(())
    }

    fn bytes(&mut self, name: &str, b: Vec<u8>) {
        self.files.push((name.into(), b));
    }

    fn commit(self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, b) in &self.files {
            write_atomic(&dir.join(name), b)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub macro_accuracy: f64,
    pub per_class_recall: Vec<Option<f64>>,
    pub confusion_matrix: Vec<Vec<usize>>,
}

impl SplitMetrics {
    pub fn compute(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        Ok(SplitMetrics {
            n: y_true.len(),
            accuracy: accuracy(y_true, y_pred)?,
            macro_accuracy: macro_accuracy(y_true, y_pred)?,
            per_class_recall: per_class_recall(y_true, y_pred, n_classes)?,
            confusion_matrix: confusion_matrix(y_true, y_pred, n_classes)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub schema_version: u32,
    pub model: String,
    pub label_names: Vec<String>,
    pub train: SplitMetrics,
    pub test: Option<SplitMetrics>,
    pub rounds: Vec<RoundRecord>,
    pub equal_vote_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject: String,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub schema_version: u32,
    pub label_names: Vec<String>,
    pub metrics: SplitMetrics,
    pub per_subject: Vec<SubjectMetrics>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_latency_seconds: Option<f64>,
}

// ---------------------------------------------------------------- commands

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Execute a parsed command; returns the run directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(s) => cmd_sweep(s),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Data(d) => cmd_data(d),
    }
}

fn cmd_train(a: TrainArgs) -> Result<PathBuf> {
    let mut cfg: TrainRunConfig = load_config(a.output.config.as_deref())?;
    cfg.data.apply(&a.data);
    apply_model_args(&mut cfg.model, &a.model);
    cfg.single |= a.single;
    cfg.model.validate()?;
    if cfg.single && cfg.model.n_learners != 1 {
        return Err(Error::Config("--single requires n_learners = 1".into()));
    }

    let start = Instant::now();
    let (train, test) = cfg.data.load()?;
    let n_classes = train.n_classes();
    let (mut model, rounds, fallback) = if cfg.single {
        let m = &cfg.model;
        let (clf, _) = HdClassifier::fit(&train.x, &train.y, n_classes, m.d_total, m.seed, m.encoder, &m.train)?;
        let labels = train.label_names.clone();
        let model = BoostHdModel::from_parts(clf.encoder, vec![clf.model], vec![1.0], m.train, m.alpha_cap, labels)?;
        (model, Vec::new(), false)
    } else {
        let fit = BoostHdModel::fit(&train.x, &train.y, n_classes, &cfg.model)?;
        (fit.model, fit.rounds, fit.equal_vote_fallback)
    };
    model.set_label_names(train.label_names.clone())?;
    let train_metrics = SplitMetrics::compute(&train.y, &model.predict_batch(&train.x)?, n_classes)?;
    let test_metrics = match &test {
        Some(t) => Some(SplitMetrics::compute(&t.y, &model.predict_batch(&t.x)?, n_classes)?),
        None => None,
    };
    let metrics = TrainMetrics {
        schema_version: METRICS_SCHEMA_VERSION,
        model: if cfg.single { "onlinehd" } else { "boosthd" }.into(),
        label_names: train.label_names.clone(),
        train: train_metrics,
        test: test_metrics,
        rounds,
        equal_vote_fallback: fallback,
    };
    let elapsed = start.elapsed().as_secs_f64();

    let dir = resolve_run_dir("train", &a.output, &cfg)?;
    let mut out = RunOutput::new(&cfg)?;
    out.bytes("model.bhd", to_bytes(&model));
    out.json("metrics.json", &metrics)?;
    out.json("timing.json", &Timing { wall_seconds: elapsed, mean_latency_seconds: None })?;
    out.commit(&dir)?;
    Ok(dir)
}

fn cmd_eval(a: EvalArgs) -> Result<PathBuf> {
    let mut cfg: EvalRunConfig = load_config(a.output.config.as_deref())?;
    set(&mut cfg.model, a.model.map(Some));
    set(&mut cfg.data, a.data.map(Some));
    set(&mut cfg.schema.label, a.label_col);
    set(&mut cfg.schema.subject, a.subject_col.map(Some));
    set(&mut cfg.filter, a.filter.map(Some));
    let model_path = cfg.model.clone().ok_or_else(|| Error::Config("--model is required".into()))?;
    let data_path = cfg.data.clone().ok_or_else(|| Error::Config("--data is required".into()))?;

    let model = load_model(&model_path)?;
    let ds = load_csv(&data_path, &cfg.schema)?;
    if ds.n_features() != model.n_features() {
        return Err(Error::SchemaMismatch(format!(
            "dataset has {} features, model expects {}",
            ds.n_features(),
            model.n_features()
        )));
    }
    let mut ds = ds.remap_labels(model.label_names())?;
    if let Some(subjects) = &cfg.filter {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| subjects.contains(&ds.subjects[i])).collect();
        if idx.is_empty() {
            return Err(Error::EmptySplit("filtered evaluation set"));
        }
        ds = ds.select(&idx);
    }

    let start = Instant::now();
    let pred = model.predict_batch(&ds.x)?;
    let latency = start.elapsed().as_secs_f64() / ds.len() as f64;
    let per_subject = ds
        .subject_ids()
        .into_iter()
        .map(|s| {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.subjects[i] == s).collect();
            let t: Vec<usize> = idx.iter().map(|&i| ds.y[i]).collect();
            let p: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
            Ok(SubjectMetrics { subject: s, n: idx.len(), accuracy: accuracy(&t, &p)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = EvalMetrics {
        schema_version: METRICS_SCHEMA_VERSION,
        label_names: model.label_names().to_vec(),
        metrics: SplitMetrics::compute(&ds.y, &pred, model.n_classes())?,
        per_subject,
    };

    let dir = resolve_run_dir("eval", &a.output, &cfg)?;
    let mut out = RunOutput::new(&cfg)?;
    out.json("metrics.json", &metrics)?;
    out.json(
        "timing.json",
        &Timing { wall_seconds: start.elapsed().as_secs_f64(), mean_latency_seconds: Some(latency) },
    )?;
    out.commit(&dir)?;
    Ok(dir)
}

fn sweep_setup<P: DeserializeOwned + Default>(c: &SweepCommon) -> Result<SweepRunConfig<P>>
where
    SweepRunConfig<P>: DeserializeOwned,
{
    let mut cfg: SweepRunConfig<P> = load_config(c.output.config.as_deref())?;
    cfg.data.apply(&c.data);
    set(&mut cfg.model.train.lr, c.lr);
    set(&mut cfg.model.train.epochs, c.epochs);
    set(&mut cfg.model.alpha_cap, c.alpha_cap);
    set(&mut cfg.model.encoder, c.encoder.map(Into::into));
    set(&mut cfg.seeds, c.seeds.clone());
    cfg.model.train.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::Config("seeds must not be empty".into()));
    }
    Ok(cfg)
}

fn finish_sweep<T: Serialize>(
    name: &str,
    output: &OutputArgs,
    cfg: &T,
    res: SweepResult,
    secs: f64,
) -> Result<PathBuf> {
    let dir = resolve_run_dir(name, output, cfg)?;
    let mut out = RunOutput::new(cfg)?;
    out.bytes("results.csv", res.to_csv_bytes()?);
    out.json("summary.json", &res.summary()?)?;
    out.bytes("pivot.csv", res.pivot_csv_bytes()?);
    out.json("timing.json", &Timing { wall_seconds: secs, mean_latency_seconds: None })?;
    out.commit(&dir)?;
    Ok(dir)
}

fn cmd_sweep(s: SweepCommand) -> Result<PathBuf> {
    let start = Instant::now();
    match s {
        SweepCommand::Heatmap { common, n_learners, d_values, mode } => {
            let mut cfg: SweepRunConfig<HeatmapParams> = sweep_setup(&common)?;
            set(&mut cfg.params.n_learners, n_learners);
            set(&mut cfg.params.d_values, d_values);
            set(
                &mut cfg.params.mode,
                mode.map(|m| match m {
                    ModeArg::FixedPerLearner => HeatmapMode::FixedPerLearner,
                    ModeArg::Divided => HeatmapMode::Divided,
                }),
            );
            let (train, test) = cfg.data.load_with_test()?;
            let p = &cfg.params;
            let res = heatmap_sweep(
                &train,
                &test,
                &p.n_learners,
                &p.d_values,
                p.mode,
                &cfg.seeds,
                &ModelTemplate::new(cfg.model),
            )?;
            finish_sweep("sweep-heatmap", &common.output, &cfg, res, start.elapsed().as_secs_f64())
        }
        SweepCommand::Stability { common, d_values, n_learners } => {
            let mut cfg: SweepRunConfig<StabilityParams> = sweep_setup(&common)?;
            set(&mut cfg.params.d_values, d_values);
            set(&mut cfg.params.n_learners, n_learners);
            let (train, test) = cfg.data.load_with_test()?;
            let p = &cfg.params;
            let res =
                stability_sweep(&train, &test, &p.d_values, p.n_learners, &cfg.seeds, &ModelTemplate::new(cfg.model))?;
            finish_sweep("sweep-stability", &common.output, &cfg, res, start.elapsed().as_secs_f64())
        }
        SweepCommand::Robustness { common, d_total, n_learners, p_b, trials, include_encoder } => {
            let mut cfg: SweepRunConfig<RobustnessParams> = sweep_setup(&common)?;
            set(&mut cfg.params.d_total, d_total);
            set(&mut cfg.params.n_learners, n_learners);
            set(&mut cfg.params.p_b, p_b);
            set(&mut cfg.params.trials, trials);
            cfg.params.include_encoder |= include_encoder;
            let (train, test) = cfg.data.load_with_test()?;
            let p = &cfg.params;
            let perturb = PerturbConfig { p_b: 0.0, trials: p.trials, seed: 0, include_encoder: p.include_encoder };
            perturb.validate()?;
            let res = robustness_grid(
                &train,
                &test,
                p.d_total,
                p.n_learners,
                &p.p_b,
                &cfg.seeds,
                &perturb,
                &ModelTemplate::new(cfg.model),
            )?;
            finish_sweep("sweep-robustness", &common.output, &cfg, res, start.elapsed().as_secs_f64())
        }
        SweepCommand::Overfit { common, target_class, r_values, d_total, n_learners } => {
            let mut cfg: SweepRunConfig<OverfitParams> = sweep_setup(&common)?;
            set(&mut cfg.params.target_class, target_class);
            set(&mut cfg.params.r_values, r_values);
            set(&mut cfg.params.d_total, d_total);
            set(&mut cfg.params.n_learners, n_learners);
            let (train, test) = cfg.data.load_with_test()?;
            let p = &cfg.params;
            let res = overfit_sweep(
                &train,
                &test,
                p.target_class,
                &p.r_values,
                p.d_total,
                p.n_learners,
                &cfg.seeds,
                &ModelTemplate::new(cfg.model),
            )?;
            finish_sweep("sweep-overfit", &common.output, &cfg, res, start.elapsed().as_secs_f64())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpan {
    pub path: PathBuf,
    pub n_learners: usize,
    pub d_total: usize,
    pub report: SpanReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanAnalysis {
    pub schema_version: u32,
    pub models: Vec<ModelSpan>,
    /// `sp(first) / sp(second)` when two models are given.
    pub sp_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub q: f64,
    pub sigma: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mean_approx: f64,
    pub variance_approx: Option<f64>,
    pub variance_singular: bool,
    pub numeric_mean: f64,
    pub numeric_variance: f64,
    pub empirical: Option<Vec<SpectralStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub q: f64,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAnalysis {
    pub schema_version: u32,
    pub entries: Vec<SpectralEntry>,
    pub limit_terms: Vec<LimitRow>,
}

fn cmd_analyze(a: AnalyzeCommand) -> Result<PathBuf> {
    let start = Instant::now();
    match a {
        AnalyzeCommand::Span { output, model, compare, rank_tol } => {
            let mut cfg: SpanRunConfig = load_config(output.config.as_deref())?;
            set(&mut cfg.model, model.map(Some));
            set(&mut cfg.compare, compare.map(Some));
            set(&mut cfg.rank_tol, rank_tol);
            let first = cfg.model.clone().ok_or_else(|| Error::Config("--model is required".into()))?;
            let mut models = Vec::new();
            for path in std::iter::once(first).chain(cfg.compare.clone()) {
                let m = load_model(&path)?;
                let report = span_utilization(&m.concatenated_class_hvs(), cfg.rank_tol)?;
                models.push(ModelSpan { path, n_learners: m.learners().len(), d_total: m.d_total(), report });
            }
            let sp_ratio = (models.len() == 2).then(|| models[0].report.sp / models[1].report.sp);
            let analysis = SpanAnalysis { schema_version: METRICS_SCHEMA_VERSION, models, sp_ratio };
            let dir = resolve_run_dir("analyze-span", &output, &cfg)?;
            let mut out = RunOutput::new(&cfg)?;
            out.json("span.json", &analysis)?;
            out.json(
                "timing.json",
                &Timing { wall_seconds: start.elapsed().as_secs_f64(), mean_latency_seconds: None },
            )?;
            out.commit(&dir)?;
            Ok(dir)
        }
        AnalyzeCommand::Spectral { output, q, sigma, tol, limit_q, mc_rows, mc_seeds } => {
            let mut cfg: SpectralRunConfig = load_config(output.config.as_deref())?;
            set(&mut cfg.q, q);
            set(&mut cfg.sigma, sigma);
            set(&mut cfg.tol, tol);
            set(&mut cfg.limit_q, limit_q);
            set(&mut cfg.mc_rows, mc_rows);
            set(&mut cfg.mc_seeds, mc_seeds);
            let mut entries = Vec::new();
            for &q in &cfg.q {
                let p = MpParams { q, sigma: cfg.sigma };
                let (lambda_min, lambda_max) = mp_bounds(p)?;
                let variance_approx = match mp_variance_approx(p) {
                    Ok(v) => Some(v),
                    Err(Error::LogSingularity) => None,
                    Err(e) => return Err(e),
                };
                let (numeric_mean, numeric_variance) = mp_moments_numeric(p, cfg.tol)?;
                let empirical = if cfg.mc_rows > 0 {
                    let cols = ((cfg.mc_rows as f64) * q).round() as usize;
                    let seeds: Vec<u64> = (0..cfg.mc_seeds as u64).collect();
                    Some(monte_carlo_spectrum(cfg.mc_rows, cols, &seeds)?)
                } else {
                    None
                };
                entries.push(SpectralEntry {
                    q,
                    sigma: cfg.sigma,
                    lambda_min,
                    lambda_max,
                    mean_approx: mp_mean_approx(p)?,
                    variance_singular: variance_approx.is_none(),
                    variance_approx,
                    numeric_mean,
                    numeric_variance,
                    empirical,
                });
            }
            let limit = cfg
                .limit_q
                .iter()
                .map(|&q| match limit_terms(q) {
                    Ok((t1, t2, t3)) => Ok(LimitRow { q, t1: Some(t1), t2: Some(t2), t3: Some(t3) }),
                    Err(Error::LogSingularity) => Ok(LimitRow { q, t1: None, t2: None, t3: None }),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            let analysis = SpectralAnalysis { schema_version: METRICS_SCHEMA_VERSION, entries, limit_terms: limit };
            let dir = resolve_run_dir("analyze-spectral", &output, &cfg)?;
            let mut out = RunOutput::new(&cfg)?;
            out.json("spectral.json", &analysis)?;
            out.json(
                "timing.json",
                &Timing { wall_seconds: start.elapsed().as_secs_f64(), mean_latency_seconds: None },
            )?;
            out.commit(&dir)?;
            Ok(dir)
        }
    }
}

fn manifest(
    ds: &Dataset,
    seed: Option<u64>,
    preprocessing: serde_json::Value,
    dropped: Vec<String>,
) -> DatasetManifest {
    DatasetManifest {
        schema_version: METRICS_SCHEMA_VERSION,
        seed,
        preprocessing,
        label_names: ds.label_names.clone(),
        feature_names: ds.feature_names.clone(),
        dropped_features: dropped,
        rows: ds.len(),
    }
}

fn cmd_data(d: DataCommand) -> Result<PathBuf> {
    match d {
        DataCommand::Prep { output, raw, label_col, subject_col, window, stride, test_subjects } => {
            let mut cfg: PrepRunConfig = load_config(output.config.as_deref())?;
            set(&mut cfg.raw, raw.map(Some));
            set(&mut cfg.schema.label, label_col);
            set(&mut cfg.schema.subject, subject_col.map(Some));
            set(&mut cfg.window, window);
            set(&mut cfg.stride, stride);
            set(&mut cfg.test_subjects, test_subjects);
            let raw = cfg.raw.clone().ok_or_else(|| Error::Config("--raw is required".into()))?;
            let recs = load_raw_csv(&raw, &cfg.schema)?;
            let windows = windows_for_all(&recs, cfg.window, cfg.stride)?;
            let (train, test) = split_by_subject(&windows, &cfg.test_subjects)?;
            let stats = fit_normalizer(&train)?;
            let train = apply_normalizer(&train, &stats)?;
            let test = apply_normalizer(&test, &stats)?;
            let pre = serde_json::json!({
                "window": cfg.window,
                "stride": cfg.stride,
                "features": ["min", "max", "mean", "std"],
                "normalization": "z-score fitted on train",
                "test_subjects": cfg.test_subjects,
                "norm_stats": stats,
            });
            let dir = resolve_run_dir("data-prep", &output, &cfg)?;
            let mut out = RunOutput::new(&cfg)?;
            out.bytes("train.csv", csv_bytes(&train)?);
            out.bytes("test.csv", csv_bytes(&test)?);
            out.json("manifest.json", &manifest(&train, None, pre, stats.dropped.clone()))?;
            out.commit(&dir)?;
            Ok(dir)
        }
        DataCommand::Synth {
            output,
            n_classes,
            n_per_class,
            n_test_per_class,
            n_features,
            separation,
            noise_std,
            n_subjects,
            seed,
        } => {
            let mut cfg: SynthRunConfig = load_config(output.config.as_deref())?;
            let s = &mut cfg.synth;
            set(&mut s.n_classes, n_classes);
            set(&mut s.n_per_class, n_per_class);
            set(&mut s.n_features, n_features);
            set(&mut s.separation, separation);
            set(&mut s.noise_std, noise_std);
            set(&mut s.n_subjects, n_subjects);
            set(&mut s.seed, seed);
            set(&mut cfg.n_test_per_class, n_test_per_class);
            let train = synth_blobs(&cfg.synth)?;
            let test = synth_blobs(&SynthConfig {
                n_per_class: cfg.n_test_per_class,
                seed: cfg.synth.seed.wrapping_add(1),
                ..cfg.synth
            })?;
            let pre = serde_json::to_value(cfg.synth)?;
            let dir = resolve_run_dir("data-synth", &output, &cfg)?;
            let mut out = RunOutput::new(&cfg)?;
            out.bytes("train.csv", csv_bytes(&train)?);
            out.bytes("test.csv", csv_bytes(&test)?);
            out.json("manifest.json", &manifest(&train, Some(cfg.synth.seed), pre, Vec::new()))?;
            out.commit(&dir)?;
            Ok(dir)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"format_version":1,"bogus":3}"#).unwrap();
        let e = load_config::<TrainRunConfig>(Some(&p)).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        std::fs::write(&p, r#"{"format_version":2}"#).unwrap();
        assert!(load_config::<TrainRunConfig>(Some(&p)).is_err());
        std::fs::write(&p, r#"{"model":{"d_total":64,"n_learners":4}}"#).unwrap();
        let c = load_config::<TrainRunConfig>(Some(&p)).unwrap();
        assert_eq!(c.model.d_total, 64);
        assert_eq!(c.model.train.lr, crate::online_hd::DEFAULT_LR);
    }

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let c = SweepRunConfig::<HeatmapParams>::default();
        let b = config_bytes(&c).unwrap();
        let back: SweepRunConfig<HeatmapParams> = serde_json::from_slice(&b).unwrap();
        assert_eq!(back, c);
        assert_eq!(config_hash(&c).unwrap(), config_hash(&back).unwrap());
        assert_eq!(config_hash(&c).unwrap().len(), 64);
    }
}
