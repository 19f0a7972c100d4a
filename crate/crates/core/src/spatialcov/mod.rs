//! Spatial covariance of port-row channel coefficients: estimation,
//! factorization, correlated generation and the periodic path-gain model.

mod estimate;
mod factor;
mod generate;
mod periodic;

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use estimate::{complex_cov, magnitude_cov, normalize_rows, ComplexCovariance, MagnitudeCovariance, RowSamples};
pub use factor::{
    cholesky, factorize, factorize_real, frobenius, ldl, reconstruct, Factor, FactorKind, HERMITIAN_TOL,
    NEGATIVE_PIVOT_TOL, ZERO_PIVOT_TOL,
};
pub use generate::{
    circular_variates, gen_complex, gen_magnitudes, sample_covariance, uniform_variates, GeneratedMagnitudes, YSource,
};
pub use periodic::{cov_model_eval, cov_model_fit, PeriodicCovParams, PeriodicFit, SINGLE_SHIFT_WAVELENGTHS};

use crate::error::{Error, Result};

/// JSON form of a complex covariance model, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceDoc {
    pub n: usize,
    pub mean_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub sigma_re: Vec<Vec<f64>>,
    pub sigma_im: Vec<Vec<f64>>,
}

impl From<&ComplexCovariance> for CovarianceDoc {
    fn from(cov: &ComplexCovariance) -> Self {
        let n = cov.dim();
        CovarianceDoc {
            n,
            mean_re: cov.mean.iter().map(|v| v.re).collect(),
            mean_im: cov.mean.iter().map(|v| v.im).collect(),
            sigma_re: (0..n).map(|i| (0..n).map(|j| cov.sigma[[i, j]].re).collect()).collect(),
            sigma_im: (0..n).map(|i| (0..n).map(|j| cov.sigma[[i, j]].im).collect()).collect(),
        }
    }
}

impl TryFrom<&CovarianceDoc> for ComplexCovariance {
    type Error = Error;

    fn try_from(doc: &CovarianceDoc) -> Result<Self> {
        let n = doc.n;
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if doc.mean_re.len() != n || doc.mean_im.len() != n || !square(&doc.sigma_re) || !square(&doc.sigma_im) {
            return Err(Error::Shape(format!("covariance document is not {n}x{n}")));
        }
        Ok(ComplexCovariance {
            sigma: Array2::from_shape_fn((n, n), |(i, j)| Complex64::new(doc.sigma_re[i][j], doc.sigma_im[i][j])),
            mean: Array1::from_shape_fn(n, |i| Complex64::new(doc.mean_re[i], doc.mean_im[i])),
        })
    }
}

/// Plain numeric grid, one CSV line per matrix row.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Empirical CDF as sorted `(value, probability)` pairs.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}
