//! C ABI for the `boosthd` library.
//!
//! Models are opaque `BhdModel` handles created by `bhd_model_train`,
//! `bhd_model_load` or `bhd_model_bitflip` and released with
//! `bhd_model_free`. Every fallible function returns a `BhdStatus`; the
//! message of the most recent failure on the calling thread is available
//! from `bhd_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use boosthd::boost::{BoostConfig, BoostHdModel};
use boosthd::encoder::EncoderKind;
use boosthd::error::Error;
use boosthd::matrix::Matrix;
use boosthd::model_io::{load_model, save_model};
use boosthd::online_hd::TrainConfig;
use boosthd::perturb::{bitflip_model, mad, PerturbConfig};
use boosthd::spectral::{mp_bounds, MpParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checksum = 5,
    VersionMismatch = 6,
    Data = 7,
    Numeric = 8,
    Panic = 9,
}

impl From<&Error> for BhdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => BhdStatus::Io,
            Error::InvalidFormat(_) => BhdStatus::Format,
            Error::ChecksumMismatch => BhdStatus::Checksum,
            Error::FormatVersionMismatch { .. } => BhdStatus::VersionMismatch,
            _ => match e.exit_code() {
                1 => BhdStatus::InvalidArgument,
                4 => BhdStatus::Numeric,
                _ => BhdStatus::Data,
            },
        }
    }
}

/// Encoder nonlinearity.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhdEncoder {
    CosSin = 0,
    Cos = 1,
}

/// Training parameters; start from `bhd_train_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhdTrainConfig {
    pub d_total: usize,
    pub n_learners: usize,
    pub epochs: usize,
    pub lr: f64,
    pub alpha_cap: f64,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub encoder: BhdEncoder,
}

/// Opaque trained ensemble.
pub struct BhdModel {
    inner: BoostHdModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: BhdStatus, msg: impl Into<String>) -> BhdStatus {
    set_last_error(msg.into());
    status
}

fn from_err(e: Error) -> BhdStatus {
    fail(BhdStatus::from(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), BhdStatus>) -> BhdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BhdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(BhdStatus::Panic, "internal panic"),
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), BhdStatus> {
    if p.is_null() {
        Err(fail(BhdStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, BhdStatus> {
    non_null(path, "path")?;
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(BhdStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn model_ref<'a>(m: *const BhdModel) -> Result<&'a BoostHdModel, BhdStatus> {
    non_null(m, "model")?;
    Ok(&(*m).inner)
}

fn boxed(inner: BoostHdModel) -> *mut BhdModel {
    Box::into_raw(Box::new(BhdModel { inner }))
}

/// Message of the last failure on this thread (empty if none). The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bhd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library defaults: 10 learners over 1000 dimensions, 20 epochs, lr 0.035.
#[no_mangle]
pub extern "C" fn bhd_train_config_default() -> BhdTrainConfig {
    let d = BoostConfig::default();
    BhdTrainConfig {
        d_total: d.d_total,
        n_learners: d.n_learners,
        epochs: d.train.epochs,
        lr: d.train.lr,
        alpha_cap: d.alpha_cap,
        seed: d.seed,
        shuffle_seed: d.train.shuffle_seed,
        encoder: BhdEncoder::CosSin,
    }
}

/// Train on a row-major `n_rows x n_cols` feature matrix with labels in
/// `0..n_classes`. On success `*out` owns a new model.
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
/// values, `cfg` to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_train(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const u32,
    n_classes: usize,
    cfg: *const BhdTrainConfig,
    out: *mut *mut BhdModel,
) -> BhdStatus {
    guard(|| {
        non_null(x, "x")?;
        non_null(labels, "labels")?;
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let len = n_rows.checked_mul(n_cols).ok_or_else(|| fail(BhdStatus::InvalidArgument, "shape overflow"))?;
        let data = std::slice::from_raw_parts(x, len).to_vec();
        let y: Vec<usize> = std::slice::from_raw_parts(labels, n_rows).iter().map(|&l| l as usize).collect();
        let c = &*cfg;
        let config = BoostConfig {
            n_learners: c.n_learners,
            d_total: c.d_total,
            train: TrainConfig { epochs: c.epochs, lr: c.lr, shuffle_seed: c.shuffle_seed },
            alpha_cap: c.alpha_cap,
            seed: c.seed,
            encoder: match c.encoder {
                BhdEncoder::CosSin => EncoderKind::CosSin,
                BhdEncoder::Cos => EncoderKind::Cos,
            },
        };
        let m = Matrix::new(n_rows, n_cols, data).map_err(from_err)?;
        let fit = BoostHdModel::fit(&m, &y, n_classes, &config).map_err(from_err)?;
        *out = boxed(fit.model);
        Ok(())
    })
}

/// Load a model file. On success `*out` owns a new model.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_load(path: *const c_char, out: *mut *mut BhdModel) -> BhdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let p = path_arg(path)?;
        *out = boxed(load_model(p).map_err(from_err)?);
        Ok(())
    })
}

/// Write a model file atomically.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_save(model: *const BhdModel, path: *const c_char) -> BhdStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_model(m, path_arg(path)?).map_err(from_err)
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_free(model: *mut BhdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predict the label of one feature vector of length `n_features`.
///
/// # Safety
/// `x` must point to `n_features` doubles and `out_label` be writable.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_predict(
    model: *const BhdModel,
    x: *const f64,
    n_features: usize,
    out_label: *mut u32,
) -> BhdStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(x, "x")?;
        non_null(out_label, "out_label")?;
        let (label, _) = m.predict(std::slice::from_raw_parts(x, n_features)).map_err(from_err)?;
        *out_label = label as u32;
        Ok(())
    })
}

/// Predict labels of a row-major `n_rows x n_cols` matrix into
/// `out_labels[0..n_rows]`.
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles and `out_labels` to
/// `n_rows` writable values.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_predict_batch(
    model: *const BhdModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_labels: *mut u32,
) -> BhdStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(x, "x")?;
        non_null(out_labels, "out_labels")?;
        let len = n_rows.checked_mul(n_cols).ok_or_else(|| fail(BhdStatus::InvalidArgument, "shape overflow"))?;
        let mat = Matrix::new(n_rows, n_cols, std::slice::from_raw_parts(x, len).to_vec()).map_err(from_err)?;
        let pred = m.predict_batch(&mat).map_err(from_err)?;
        let out = std::slice::from_raw_parts_mut(out_labels, n_rows);
        for (o, p) in out.iter_mut().zip(pred) {
            *o = p as u32;
        }
        Ok(())
    })
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_n_classes(model: *const BhdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_classes())
}

/// Input feature count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_n_features(model: *const BhdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Total hypervector width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_d_total(model: *const BhdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.d_total())
}

/// Number of weak learners, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_n_learners(model: *const BhdModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.learners().len())
}

/// Copy the learner weights into `out[0..len]`; `len` must equal the
/// learner count.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_alphas(model: *const BhdModel, out: *mut f64, len: usize) -> BhdStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let a = m.alphas();
        if len != a.len() {
            return Err(fail(BhdStatus::InvalidArgument, format!("expected {} alphas, got room for {len}", a.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(a);
        Ok(())
    })
}

/// Faulty copy of `model`: every stored class-hypervector bit flips with
/// probability `p_b`, keyed by `(seed, trial)`. The source is unchanged.
///
/// # Safety
/// `out` must be writable; `out_flipped` may be null.
#[no_mangle]
pub unsafe extern "C" fn bhd_model_bitflip(
    model: *const BhdModel,
    p_b: f64,
    seed: u64,
    trial: u64,
    out: *mut *mut BhdModel,
    out_flipped: *mut u64,
) -> BhdStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let cfg = PerturbConfig { p_b, trials: 1, seed, include_encoder: false };
        let (faulty, flipped) = bitflip_model(m, &cfg, trial).map_err(from_err)?;
        if !out_flipped.is_null() {
            *out_flipped = flipped;
        }
        *out = boxed(faulty);
        Ok(())
    })
}

/// Median absolute deviation of `values[0..len]`.
///
/// # Safety
/// `values` must point to `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn bhd_mad(values: *const f64, len: usize, out: *mut f64) -> BhdStatus {
    guard(|| {
        non_null(values, "values")?;
        non_null(out, "out")?;
        *out = mad(std::slice::from_raw_parts(values, len)).map_err(from_err)?;
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn bhd_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> BhdStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let (a, b) = (std::slice::from_raw_parts(a, len), std::slice::from_raw_parts(b, len));
        *out = boosthd::hdvec::cosine(a, b).map_err(from_err)?;
        Ok(())
    })
}

/// Marchenko-Pastur bulk edges for aspect ratio `q` and entry scale `sigma`.
///
/// # Safety
/// `out_min` and `out_max` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bhd_mp_bounds(q: f64, sigma: f64, out_min: *mut f64, out_max: *mut f64) -> BhdStatus {
    guard(|| {
        non_null(out_min, "out_min")?;
        non_null(out_max, "out_max")?;
        let (lo, hi) = mp_bounds(MpParams { q, sigma }).map_err(from_err)?;
        *out_min = lo;
        *out_max = hi;
        Ok(())
    })
}
