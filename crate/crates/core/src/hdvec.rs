//! Dense real-valued hypervectors and the three HDC primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense real hypervector. Values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypervector(Vec<f64>);

impl Hypervector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        Ok(Hypervector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Hypervector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f64]> for Hypervector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity of two raw slices.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNormVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    cosine(&a.0, &b.0)
}

/// Elementwise sum, accumulated left to right.
pub fn bundle(vs: &[Hypervector]) -> Result<Hypervector> {
    let first = vs.first().ok_or(Error::EmptyInput)?;
    let mut acc = first.0.clone();
    for v in &vs[1..] {
        if v.dim() != acc.len() {
            return Err(Error::DimensionMismatch { expected: acc.len(), found: v.dim() });
        }
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    Ok(Hypervector(acc))
}

/// Elementwise product.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(Hypervector(a.0.iter().zip(&b.0).map(|(x, y)| x * y).collect()))
}

/// Circular right rotation by `k` positions (negative `k` rotates left).
pub fn permute(v: &Hypervector, k: i64) -> Hypervector {
    let d = v.dim();
    let shift = k.rem_euclid(d as i64) as usize;
    let mut out = v.0.clone();
    out.rotate_right(shift);
    Hypervector(out)
}
