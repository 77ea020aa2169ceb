//! The `BHD1` model container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic           4 bytes  "BHD1"
//! version         u32      (major << 16) | minor
//! n_classes       u32
//! n_features      u32
//! d_total         u32
//! n_learners      u32
//! encoder_seed    u64
//! shuffle_seed    u64
//! lr              f64
//! epochs          u32
//! alpha_cap       f64
//! encoder_kind    u8       0 = cos*sin, 1 = cos
//! labels          n_classes x (u32 byte length, UTF-8 bytes)
//! partition       n_learners x (u32 offset, u32 width)
//! alphas          n_learners x f64
//! basis           n_features * d_total x f32 (row-major)
//! phases          d_total x f32
//! class hvs       per learner: n_classes * width x f32 (row-major)
//! crc32c          u32 over every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use crate::boost::BoostHdModel;
use crate::encoder::{EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::online_hd::{OnlineHdModel, TrainConfig};

pub const MAGIC: &[u8; 4] = b"BHD1";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

pub fn format_version() -> u32 {
    (FORMAT_MAJOR as u32) << 16 | FORMAT_MINOR as u32
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn to_bytes(model: &BoostHdModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&format_version().to_le_bytes());
    let enc = model.encoder();
    let train = model.train_config();
    w.u32(model.n_classes());
    w.u32(model.n_features());
    w.u32(model.d_total());
    w.u32(model.learners().len());
    w.u64(enc.seed());
    w.u64(train.shuffle_seed);
    w.f64(train.lr);
    w.u32(train.epochs);
    w.f64(model.alpha_cap());
    w.u8(enc.kind().tag());
    for name in model.label_names() {
        w.u32(name.len());
        w.0.extend_from_slice(name.as_bytes());
    }
    for s in model.partition() {
        w.u32(s.offset);
        w.u32(s.width);
    }
    for &a in model.alphas() {
        w.f64(a);
    }
    w.f32s(enc.basis());
    w.f32s(enc.phases());
    for l in model.learners() {
        w.f32s(l.class_hvs());
    }
    let crc = crc32c::crc32c(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::InvalidFormat("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::InvalidFormat("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<BoostHdModel> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(Error::InvalidFormat("bad magic".into()));
    }
    if bytes.len() < 12 {
        return Err(Error::ChecksumMismatch);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if (version >> 16) as u16 != FORMAT_MAJOR {
        return Err(Error::FormatVersionMismatch { found: version, supported: FORMAT_MAJOR });
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32c::crc32c(payload) != stored {
        return Err(Error::ChecksumMismatch);
    }

    let mut r = Reader { buf: payload, pos: 8 };
    let n_classes = r.u32()?;
    let n_features = r.u32()?;
    let d_total = r.u32()?;
    let n_learners = r.u32()?;
    let encoder_seed = r.u64()?;
    let shuffle_seed = r.u64()?;
    let lr = r.f64()?;
    let epochs = r.u32()?;
    let alpha_cap = r.f64()?;
    let kind = EncoderKind::from_tag(r.u8()?).ok_or_else(|| Error::InvalidFormat("unknown encoder kind".into()))?;
    if n_classes == 0 || n_features == 0 || n_learners == 0 || d_total < n_learners {
        return Err(Error::InvalidFormat("inconsistent metadata".into()));
    }
    let mut labels = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = r.u32()?;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| Error::InvalidFormat("label is not UTF-8".into()))?;
        labels.push(s.to_owned());
    }
    let mut widths = Vec::with_capacity(n_learners);
    let mut next = 0;
    for _ in 0..n_learners {
        let offset = r.u32()?;
        let width = r.u32()?;
        if offset != next || width == 0 {
            return Err(Error::InvalidFormat("partition slices are not contiguous".into()));
        }
        next += width;
        widths.push(width);
    }
    if next != d_total {
        return Err(Error::InvalidFormat("partition does not cover d_total".into()));
    }
    let alphas = (0..n_learners).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let basis = r.f32s(n_features * d_total)?;
    let phases = r.f32s(d_total)?;
    let encoder = EncoderParams::from_parts(basis, phases, n_features, d_total, encoder_seed, kind)?;
    let learners = widths
        .iter()
        .map(|&w| OnlineHdModel::from_parts(r.f32s(n_classes * w)?, n_classes, w, lr))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != payload.len() {
        return Err(Error::InvalidFormat("trailing bytes before checksum".into()));
    }
    let train = TrainConfig { epochs, lr, shuffle_seed };
    BoostHdModel::from_parts(encoder, learners, alphas, train, alpha_cap, labels)
        .map_err(|e| Error::InvalidFormat(e.to_string()))
}

/// Write `bytes` to `path` via a temporary file in the same directory and
/// an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_model(model: &BoostHdModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_bytes(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BoostHdModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
