use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector in cosine similarity")]
    ZeroNormVector,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("non-finite input value at index {0}")]
    NonFiniteInput(usize),
    #[error("query encodes to a zero-norm hypervector")]
    DegenerateEncoding,
    #[error("class {0} has a zero-norm hypervector (absent from training data)")]
    UntrainedClass(usize),
    #[error("negative sample weight at index {0}")]
    NegativeWeight(usize),
    #[error("all sample weights are zero")]
    AllZeroWeights,
    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("d_total = {d_total} cannot host {n_learners} learners")]
    TooManyLearners { d_total: usize, n_learners: usize },
    #[error("training data needs at least two classes")]
    SingleClassData,

    #[error("io failure on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model format version {found:#010x} is not supported (reader supports major {supported})")]
    FormatVersionMismatch { found: u32, supported: u16 },
    #[error("model file checksum mismatch (truncated or corrupted)")]
    ChecksumMismatch,
    #[error("invalid model file: {0}")]
    InvalidFormat(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("logarithm singularity: lambda_min is zero (q == 1)")]
    LogSingularity,
    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },
    #[error("singular value decomposition failed")]
    DecompositionFailure,
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("unparseable cell at row {row}, column {column}: {value:?}")]
    UnparseableCell { row: usize, column: usize, value: String },
    #[error("series of length {len} is shorter than window {window}")]
    WindowTooLarge { len: usize, window: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown subject {0:?}")]
    UnknownSubject(String),
    #[error("{0} split would be empty")]
    EmptySplit(&'static str),
    #[error("class {0} not present in dataset")]
    UnknownClass(usize),
    #[error("imbalance ratio must be >= 1, got {0}")]
    InvalidRatio(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bit-flip probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("configuration error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the error family: 1 config, 2 IO, 3 data validation, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_)
            | Json(_)
            | InvalidParams(_)
            | InvalidProbability(_)
            | InvalidRatio(_)
            | TooManyLearners { .. }
            | ZeroDimension => 1,
            Io { .. } | FormatVersionMismatch { .. } | ChecksumMismatch | InvalidFormat(_) => 2,
            DimensionMismatch { .. }
            | EmptyInput
            | NonFiniteInput(_)
            | NegativeWeight(_)
            | AllZeroWeights
            | InvalidLabel { .. }
            | SingleClassData
            | MissingColumn(_)
            | UnparseableCell { .. }
            | WindowTooLarge { .. }
            | EmptyDataset
            | UnknownSubject(_)
            | EmptySplit(_)
            | UnknownClass(_)
            | LengthMismatch(..)
            | NonFinite
            | SchemaMismatch(_)
            | Csv(_) => 3,
            ZeroNormVector
            | DegenerateEncoding
            | UntrainedClass(_)
            | LogSingularity
            | QuadratureFailure { .. }
            | DecompositionFailure
            | ZeroNormRow(_) => 4,
        }
    }
}
