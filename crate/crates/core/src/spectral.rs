//! Marchenko-Pastur statistics of Gaussian encoding kernels, empirical
//! spectra, and span utilization of class hypervectors.
//!
//! For an `N_r x N_c` matrix `K` with i.i.d. entries of variance `sigma^2`
//! and aspect ratio `q = N_c / N_r`, the eigenvalues of `K^T K / N_r` follow
//! the Marchenko-Pastur law with bulk edges `sigma^2 (1 -/+ sqrt(q))^2`.
//! The closed-form mean and variance approximations below are kept exactly
//! as commonly stated (including the `ln(lambda_min)` singularity at
//! `q = 1`); [`mp_moments_numeric`] integrates the density and is the
//! reference for the true moments.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdvec::cosine;
use crate::matrix::Matrix;
use crate::quadrature;
use crate::rng;

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;
/// Floor for the per-class attenuation factors in [`span_utilization`].
pub const ATTENUATION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    pub q: f64,
    pub sigma: f64,
}

impl MpParams {
    pub fn new(q: f64) -> Self {
        MpParams { q, sigma: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidParams(format!("q must be positive, got {}", self.q)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// `(lambda_min, lambda_max) = sigma^2 (1 -/+ sqrt(q))^2`.
pub fn mp_bounds(p: MpParams) -> Result<(f64, f64)> {
    p.validate()?;
    let s2 = p.sigma * p.sigma;
    let r = p.q.sqrt();
    Ok((s2 * (1.0 - r).powi(2), s2 * (1.0 + r).powi(2)))
}

/// `(lambda_max - lambda_min)^{3/2} / (3 pi q)`.
pub fn mp_mean_approx(p: MpParams) -> Result<f64> {
    let (lo, hi) = mp_bounds(p)?;
    Ok((hi - lo).powf(1.5) / (3.0 * std::f64::consts::PI * p.q))
}

/// `[ (hi^2 - lo^2)/2 - 2 mu (hi - lo) + mu^2 (ln|hi| - ln|lo|) ] / (2 pi sigma^2 q)`
/// with `mu` from [`mp_mean_approx`].
pub fn mp_variance_approx(p: MpParams) -> Result<f64> {
    let (lo, hi) = mp_bounds(p)?;
    if lo == 0.0 {
        return Err(Error::LogSingularity);
    }
    let mu = mp_mean_approx(p)?;
    let bracket = 0.5 * (hi * hi - lo * lo) - 2.0 * mu * (hi - lo) + mu * mu * (hi.abs().ln() - lo.abs().ln());
    Ok(bracket / (2.0 * std::f64::consts::PI * p.sigma * p.sigma * p.q))
}

/// Mean and variance of the Marchenko-Pastur law by adaptive quadrature of
/// the density, to absolute tolerance `tol`. For `q > 1` the point mass of
/// weight `1 - 1/q` at zero is included.
pub fn mp_moments_numeric(p: MpParams, tol: f64) -> Result<(f64, f64)> {
    let (lo, hi) = mp_bounds(p)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParams("tolerance must be positive".into()));
    }
    let half = 0.5 * (hi - lo);
    let norm = 2.0 * std::f64::consts::PI * p.sigma * p.sigma * p.q;
    // lambda = lo + half (1 - cos t) absorbs both square-root edges:
    // f(lambda) d lambda = half^2 sin^2 t / (norm * lambda) dt
    let moment = |k: i32, tol: f64| {
        quadrature::integrate(
            move |t: f64| {
                let lam = lo + half * (1.0 - t.cos());
                let s = t.sin();
                half * half * s * s / norm * lam.powi(k - 1)
            },
            0.0,
            std::f64::consts::PI,
            tol,
            4000,
        )
    };
    let mean = moment(1, tol / 8.0)?;
    let second = moment(2, tol / 8.0)?;
    Ok((mean, second - mean * mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralStats {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mean: f64,
    pub variance: f64,
    /// Smallest over largest singular value of the matrix.
    pub axis_ratio: f64,
}

/// Spectrum of the sample covariance `K^T K / N_r` of an `N_r x N_c`
/// matrix, computed from the singular values of `K`. When `N_c > N_r` the
/// `N_c - N_r` structural zero eigenvalues are included.
pub fn empirical_spectrum(k: &Matrix) -> Result<SpectralStats> {
    let (nr, nc) = (k.rows(), k.cols());
    if nr < 2 || nc < 2 {
        return Err(Error::InvalidParams(format!("matrix must be at least 2x2, got {nr}x{nc}")));
    }
    let sv = singular_values(k)?;
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    let s_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if s_max == 0.0 {
        return Err(Error::DecompositionFailure);
    }
    let mut eig: Vec<f64> = sv.iter().map(|s| s * s / nr as f64).collect();
    eig.resize(nc, 0.0);
    let n = eig.len() as f64;
    let mean = eig.iter().sum::<f64>() / n;
    let variance = eig.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok(SpectralStats {
        lambda_min: eig.iter().copied().fold(f64::INFINITY, f64::min),
        lambda_max: eig.iter().copied().fold(0.0, f64::max),
        mean,
        variance,
        axis_ratio: s_min / s_max,
    })
}

/// Singular values of `m` (`min(rows, cols)` of them, unordered).
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    let sv = dm.try_svd(false, false, f64::EPSILON, 10_000).ok_or(Error::DecompositionFailure)?.singular_values;
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::DecompositionFailure);
    }
    Ok(sv.iter().copied().collect())
}

/// `N_r x N_c` matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix(n_rows: usize, n_cols: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, 0);
    let data = (0..n_rows * n_cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::new(n_rows, n_cols, data).expect("shape")
}

/// [`empirical_spectrum`] of one Gaussian matrix per seed, in seed order.
pub fn monte_carlo_spectrum(n_rows: usize, n_cols: usize, seeds: &[u64]) -> Result<Vec<SpectralStats>> {
    seeds.par_iter().map(|&s| empirical_spectrum(&gaussian_matrix(n_rows, n_cols, s))).collect()
}

/// The three terms whose sum (over `2 pi`) forms the variance approximation,
/// each divided by `q`, at `sigma = 1`:
///
/// ```text
/// t1 = (hi^2 - lo^2) / q
/// t2 = -2 mu (hi - lo) / q
/// t3 = mu^2 (ln|hi| - ln|lo|) / q
/// ```
pub fn limit_terms(q: f64) -> Result<(f64, f64, f64)> {
    let p = MpParams::new(q);
    let (lo, hi) = mp_bounds(p)?;
    if lo == 0.0 {
        return Err(Error::LogSingularity);
    }
    let mu = mp_mean_approx(p)?;
    let t1 = (hi * hi - lo * lo) / q;
    let t2 = -2.0 * mu * (hi - lo) / q;
    let t3 = mu * mu * (hi.abs().ln() - lo.abs().ln()) / q;
    Ok((t1, t2, t3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub numeric_rank: usize,
    /// `numeric_rank / D`.
    pub rank_fraction: f64,
    /// Per-class factor `1 - mean_{j != i} |cos(C_i, C_j)|`, floored.
    pub pi: Vec<f64>,
    /// Product of the `pi` factors.
    pub attenuation: f64,
    /// `rank_fraction / attenuation`.
    pub sp: f64,
    pub pairwise_sims: Vec<Vec<f64>>,
    /// Set when any factor hit the floor (collinear class hypervectors).
    pub degenerate: bool,
}

/// Span utilization of an `L x D` matrix of class hypervectors.
pub fn span_utilization(class_hvs: &Matrix, rank_tolerance: f64) -> Result<SpanReport> {
    let (l, d) = (class_hvs.rows(), class_hvs.cols());
    if l == 0 || d == 0 {
        return Err(Error::EmptyInput);
    }
    for (i, row) in class_hvs.iter_rows().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNormRow(i));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    let sv = singular_values(class_hvs)?;
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    let numeric_rank = sv.iter().filter(|&&s| s > rank_tolerance * s_max).count();

    let mut sims = vec![vec![0.0; l]; l];
    #[allow(clippy::needless_range_loop)]
    for i in 0..l {
        sims[i][i] = 1.0;
        for j in i + 1..l {
            let c = cosine(class_hvs.row(i), class_hvs.row(j))?;
            sims[i][j] = c;
            sims[j][i] = c;
        }
    }
    let mut degenerate = false;
    let pi: Vec<f64> = (0..l)
        .map(|i| {
            if l == 1 {
                return 1.0;
            }
            let mean_abs = (0..l).filter(|&j| j != i).map(|j| sims[i][j].abs()).sum::<f64>() / (l - 1) as f64;
            let v = 1.0 - mean_abs;
            if v < ATTENUATION_FLOOR {
                degenerate = true;
            }
            v.clamp(ATTENUATION_FLOOR, 1.0)
        })
        .collect();
    let attenuation: f64 = pi.iter().product();
    let rank_fraction = numeric_rank as f64 / d as f64;
    Ok(SpanReport {
        numeric_rank,
        rank_fraction,
        pi,
        attenuation,
        sp: rank_fraction / attenuation,
        pairwise_sims: sims,
        degenerate,
    })
}
