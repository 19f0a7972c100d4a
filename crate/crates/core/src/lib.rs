//! Channel synthesis, spatial covariance modeling, antenna position selection
//! and beamforming evaluation for movable-antenna (MA) systems.
//!
//! The pipeline runs from a wideband per-port two-ray channel ([`tworay`]),
//! through impulse-response ray extraction ([`rayextract`]) and narrowband
//! slicing ([`chanstore`]), to row-wise spatial covariance models
//! ([`spatialcov`]), region-based port selection ([`portselect`]) and
//! constant-modulus beamforming with spectral-efficiency sweeps
//! ([`beamsweep`]).

// `!(a > b)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamsweep;
pub mod chanstore;
pub mod error;
pub mod portselect;
pub mod rayextract;
pub mod spatialcov;
pub mod tworay;

pub use error::{Error, Result};
