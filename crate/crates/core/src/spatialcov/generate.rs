//! Correlated sample generation `H = mu + C Y` from a fitted covariance.
//!
//! Every sample draws from its own ChaCha stream (`seed`, stream = sample
//! index), so output does not depend on how samples are scheduled.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::estimate::{normalize_rows, ComplexCovariance, MagnitudeCovariance, RowSamples};
use super::factor::{factorize, factorize_real};
use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// `n x count` matrix of independent `U[-sqrt 3, sqrt 3]` variates (zero mean, unit variance).
pub fn uniform_variates(n: usize, count: usize, seed: u64) -> Array2<f64> {
    let columns: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k);
            (0..n).map(|_| SQRT_3 * (2.0 * rng.random::<f64>() - 1.0)).collect()
        })
        .collect();
    Array2::from_shape_fn((n, count), |(i, k)| columns[k][i])
}

/// Unit-modulus variates with uniform phase: zero mean, unit variance.
pub fn circular_variates(n: usize, count: usize, seed: u64) -> Array2<Complex64> {
    let columns: Vec<Vec<Complex64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k);
            (0..n)
                .map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()))
                .collect()
        })
        .collect();
    Array2::from_shape_fn((n, count), |(i, k)| columns[k][i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMagnitudes {
    /// `n x count`; column `k` is one draw of `|H|`.
    pub samples: Array2<f64>,
    /// Entries below zero. They are kept as generated.
    pub negative_count: usize,
}

pub fn gen_magnitudes(model: &MagnitudeCovariance, count: usize, seed: u64) -> Result<GeneratedMagnitudes> {
    let factor = factorize_real(&model.sigma)?;
    let c = factor.c.mapv(|v| v.re);
    let x = uniform_variates(model.dim(), count, seed);
    let samples = c.dot(&x) + model.mean.view().insert_axis(Axis(1));
    let negative_count = samples.iter().filter(|&&v| v < 0.0).count();
    Ok(GeneratedMagnitudes {
        samples,
        negative_count,
    })
}

/// Source of the zero-mean, unit-variance `Y` driving complex generation.
#[derive(Debug, Clone, PartialEq)]
pub enum YSource {
    CircularUniformPhase,
    /// Measured rows normalized per row; sample `k` uses column `k`.
    EmpiricalRows(RowSamples),
}

/// `n x count` complex samples whose ensemble covariance is `model.sigma`.
pub fn gen_complex(model: &ComplexCovariance, source: &YSource, count: usize, seed: u64) -> Result<Array2<Complex64>> {
    let n = model.dim();
    let factor = factorize(&model.sigma)?;
    let y = match source {
        YSource::CircularUniformPhase => circular_variates(n, count, seed),
        YSource::EmpiricalRows(rows) => {
            if rows.n_rows() != n {
                return Err(Error::Shape(format!(
                    "{} empirical rows for a {n}-variable model",
                    rows.n_rows()
                )));
            }
            if count > rows.n_samples() {
                return Err(Error::InsufficientSamples {
                    needed: count,
                    got: rows.n_samples(),
                });
            }
            let normalized = normalize_rows(rows)?;
            normalized.data().slice(ndarray::s![.., ..count]).to_owned()
        }
    };
    Ok(factor.c.dot(&y) + model.mean.view().insert_axis(Axis(1)))
}

/// Sample mean and population covariance of generated columns.
pub fn sample_covariance(samples: &Array2<Complex64>) -> Result<ComplexCovariance> {
    super::estimate::complex_cov(&RowSamples::new(samples.clone())?)
}
