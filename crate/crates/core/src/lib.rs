//! Boosted hyperdimensional computing.
//!
//! Inputs are encoded into a wide hypervector space by a random nonlinear
//! projection. [`online_hd`] trains one class-prototype classifier on such
//! encodings; [`boost`] partitions the space into slices and trains one
//! weak classifier per slice under multiclass AdaBoost (SAMME) weighting.
//! The remaining modules cover spectral analysis of random encoders,
//! dataset preparation, fault injection and experiment sweeps.

pub mod boost;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod hdvec;
pub mod matrix;
pub mod model_io;
pub mod online_hd;
pub mod perturb;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod sweep;

pub use boost::{BoostConfig, BoostFit, BoostHdModel};
pub use encoder::{EncoderKind, EncoderParams};
pub use error::{Error, Result};
pub use hdvec::Hypervector;
pub use matrix::Matrix;
pub use online_hd::{HdClassifier, OnlineHdModel, TrainConfig};
