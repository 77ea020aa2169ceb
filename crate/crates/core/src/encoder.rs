//! Nonlinear random-projection encoder.
//!
//! A feature vector `x` of length `F` is projected through a Gaussian basis
//! `B` (`F x D`) and passed through a trigonometric activation:
//!
//! ```text
//! u_d = <x, B[:, d]>
//! h_d = cos(u_d + phase_d) * sin(u_d)      (EncoderKind::CosSin, default)
//! h_d = cos(u_d + phase_d)                 (EncoderKind::Cos)
//! ```
//!
//! The basis is drawn from ChaCha20 substream 0 of the seed (standard normal,
//! rounded to `f32`), the phases from substream 1 (uniform on `[0, 2pi)`).
//! Both are stored as `f32` so that the model file holds them bit-exactly.

use std::f32::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdvec::Hypervector;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    #[default]
    CosSin,
    Cos,
}

impl EncoderKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            EncoderKind::CosSin => 0,
            EncoderKind::Cos => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EncoderKind::CosSin),
            1 => Some(EncoderKind::Cos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Row-major `in_features x out_dim`.
    pub(crate) basis: Vec<f32>,
    pub(crate) phases: Vec<f32>,
    pub(crate) in_features: usize,
    pub(crate) out_dim: usize,
    pub(crate) seed: u64,
    pub(crate) kind: EncoderKind,
}

impl EncoderParams {
    pub fn new(in_features: usize, out_dim: usize, seed: u64) -> Result<Self> {
        Self::with_kind(in_features, out_dim, seed, EncoderKind::CosSin)
    }

    pub fn with_kind(in_features: usize, out_dim: usize, seed: u64, kind: EncoderKind) -> Result<Self> {
        if in_features == 0 || out_dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut r = rng::stream(seed, 0);
        let basis = (0..in_features * out_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z as f32
            })
            .collect();
        let mut r = rng::stream(seed, 1);
        let phases = (0..out_dim)
            .map(|_| {
                let p = (r.random::<f64>() * std::f64::consts::TAU) as f32;
                // rounding to f32 can land exactly on 2pi
                if p >= TAU {
                    0.0
                } else {
                    p
                }
            })
            .collect();
        Ok(EncoderParams { basis, phases, in_features, out_dim, seed, kind })
    }

    /// Rebuild from stored parts (model loading).
    pub(crate) fn from_parts(
        basis: Vec<f32>,
        phases: Vec<f32>,
        in_features: usize,
        out_dim: usize,
        seed: u64,
        kind: EncoderKind,
    ) -> Result<Self> {
        if basis.len() != in_features * out_dim || phases.len() != out_dim {
            return Err(Error::InvalidFormat("encoder shape does not match metadata".into()));
        }
        Ok(EncoderParams { basis, phases, in_features, out_dim, seed, kind })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn basis(&self) -> &[f32] {
        &self.basis
    }

    pub fn phases(&self) -> &[f32] {
        &self.phases
    }

    pub(crate) fn tensors_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.basis, &mut self.phases)
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.in_features {
            return Err(Error::DimensionMismatch { expected: self.in_features, found: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        debug_assert_eq!(out.len(), self.out_dim);
        out.fill(0.0);
        for (f, &xf) in x.iter().enumerate() {
            let row = &self.basis[f * self.out_dim..(f + 1) * self.out_dim];
            for (u, &b) in out.iter_mut().zip(row) {
                *u += xf * b as f64;
            }
        }
        match self.kind {
            EncoderKind::CosSin => {
                for (u, &p) in out.iter_mut().zip(&self.phases) {
                    *u = (*u + p as f64).cos() * u.sin();
                }
            }
            EncoderKind::Cos => {
                for (u, &p) in out.iter_mut().zip(&self.phases) {
                    *u = (*u + p as f64).cos();
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Hypervector> {
        let mut out = vec![0.0; self.out_dim];
        self.encode_into(x, &mut out)?;
        Hypervector::new(out)
    }

    /// Encode every row of `x`. Rows are processed in parallel; the output
    /// does not depend on the thread count.
    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() > 0 && x.cols() != self.in_features {
            return Err(Error::DimensionMismatch { expected: self.in_features, found: x.cols() });
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        let d = self.out_dim;
        if x.rows() == 0 {
            return Ok(out);
        }
        out.as_mut_slice().par_chunks_mut(d).enumerate().try_for_each(|(i, row)| self.encode_into(x.row(i), row))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdvec::cosine;

    #[test]
    fn shape_and_determinism() {
        let p = EncoderParams::new(4, 100, 7).unwrap();
        assert_eq!(p.basis().len(), 400);
        assert_eq!(p.phases().len(), 100);
        assert_eq!(p, EncoderParams::new(4, 100, 7).unwrap());
        let q = EncoderParams::new(4, 100, 8).unwrap();
        assert!(p.basis().iter().zip(q.basis()).any(|(a, b)| a != b));
        assert!(p.phases().iter().all(|&x| (0.0..TAU).contains(&x)));
        assert!(p.basis().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(EncoderParams::new(0, 10, 1), Err(Error::ZeroDimension)));
        assert!(matches!(EncoderParams::new(3, 0, 1), Err(Error::ZeroDimension)));
    }

    #[test]
    fn zero_input_encodes_to_zero() {
        let p = EncoderParams::new(5, 64, 1).unwrap();
        let h = p.encode(&[0.0; 5]).unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_form_single_coordinate() {
        let p = EncoderParams::from_parts(vec![1.0], vec![0.0], 1, 1, 0, EncoderKind::CosSin).unwrap();
        let h = p.encode(&[std::f64::consts::FRAC_PI_4]).unwrap();
        assert!((h.as_slice()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn input_validation() {
        let p = EncoderParams::new(3, 8, 1).unwrap();
        assert!(matches!(p.encode(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.encode(&[1.0, f64::INFINITY, 0.0]), Err(Error::NonFiniteInput(1))));
    }

    #[test]
    fn bounded_output() {
        let p = EncoderParams::new(6, 512, 3).unwrap();
        let mut r = rng::seeded(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-50.0..50.0)).collect();
            let h = p.encode(&x).unwrap();
            assert!(h.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn batch_matches_single() {
        let p = EncoderParams::new(3, 200, 5).unwrap();
        let mut r = rng::seeded(2);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let batch = p.encode_batch(&x).unwrap();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(batch.row(i), p.encode(row).unwrap().as_slice());
        }
        let empty = p.encode_batch(&Matrix::zeros(0, 3)).unwrap();
        assert_eq!(empty.rows(), 0);
        let one = p.encode_batch(&x.select_rows(&[0])).unwrap();
        assert_eq!(one.row(0), batch.row(0));
    }

    #[test]
    fn lipschitz_bound_and_derivative() {
        let p = EncoderParams::new(4, 256, 9).unwrap();
        let lip = p.basis().iter().fold(0.0f64, |m, &b| m.max((b as f64).abs()));
        let x = [0.3, -0.7, 1.1, 0.05];
        let h0 = p.encode(&x).unwrap();
        for f in 0..4 {
            let eps = 1e-6;
            let mut xe = x;
            xe[f] += eps;
            let h1 = p.encode(&xe).unwrap();
            for d in 0..256 {
                let diff = h1.as_slice()[d] - h0.as_slice()[d];
                assert!(diff.abs() <= lip * eps * (1.0 + 1e-6));
                // d/du [cos(u + b) sin(u)] = cos(2u + b)
                let u: f64 = (0..4).map(|g| x[g] * p.basis()[g * 256 + d] as f64).sum();
                let analytic = (2.0 * u + p.phases()[d] as f64).cos() * p.basis()[f * 256 + d] as f64;
                assert!((diff / eps - analytic).abs() < 1e-4, "d={d} f={f}");
            }
        }
    }

    #[test]
    fn clusters_stay_separated_after_encoding() {
        for seed in 0..10u64 {
            let p = EncoderParams::new(3, 2000, seed).unwrap();
            let mut r = rng::seeded(100 + seed);
            let centers = [[1.5, 0.0, 0.0], [0.0, 1.5, 0.0]];
            let mut enc = vec![vec![]; 2];
            for (c, ctr) in centers.iter().enumerate() {
                for _ in 0..10 {
                    let x: Vec<f64> = ctr.iter().map(|m| m + r.random_range(-0.1..0.1)).collect();
                    enc[c].push(p.encode(&x).unwrap());
                }
            }
            let avg = |a: &[Hypervector], b: &[Hypervector]| {
                let mut s = 0.0;
                let mut n = 0.0;
                for u in a {
                    for v in b {
                        if !std::ptr::eq(u, v) {
                            s += cosine(u.as_slice(), v.as_slice()).unwrap();
                            n += 1.0;
                        }
                    }
                }
                s / n
            };
            assert!(avg(&enc[0], &enc[0]) > avg(&enc[0], &enc[1]));
            assert!(avg(&enc[1], &enc[1]) > avg(&enc[0], &enc[1]));
        }
    }
}
