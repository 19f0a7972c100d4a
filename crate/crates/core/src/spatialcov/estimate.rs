use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::chanstore::PortCoefficientField;
use crate::error::{Error, Result};

/// Samples of the row variables `H_1..H_n`: row `i` holds the `m` samples of `H_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSamples {
    data: Array2<Complex64>,
}

impl RowSamples {
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        let (n, m) = data.dim();
        if n == 0 {
            return Err(Error::Shape("row samples need at least one row".into()));
        }
        if m < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: m });
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidParameter("row samples must be finite".into()));
        }
        Ok(RowSamples { data })
    }

    /// One variable per horizontal position (grid column), sampled over the
    /// vertical positions (grid rows) of that column.
    pub fn from_field_horizontal(field: &PortCoefficientField) -> Result<Self> {
        Self::new(field.h.t().to_owned())
    }

    pub fn from_real(data: &Array2<f64>) -> Result<Self> {
        Self::new(data.mapv(|v| Complex64::new(v, 0.0)))
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm())
    }
}

/// Complex covariance `E{(H_i - mu_i)(H_j - mu_j)^*}` and mean of the row variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCovariance {
    pub sigma: Array2<Complex64>,
    pub mean: Array1<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeCovariance {
    pub sigma: Array2<f64>,
    pub mean: Array1<f64>,
}

impl ComplexCovariance {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Correlation coefficient `rho_ij = Cov{H_i,H_j} / (sigma_i sigma_j)`.
    pub fn correlation(&self, i: usize, j: usize) -> Complex64 {
        let denom = (self.sigma[[i, i]].re * self.sigma[[j, j]].re).sqrt();
        if denom > 0.0 {
            self.sigma[[i, j]] / denom
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

impl MagnitudeCovariance {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_complex(&self) -> ComplexCovariance {
        ComplexCovariance {
            sigma: self.sigma.mapv(|v| Complex64::new(v, 0.0)),
            mean: self.mean.mapv(|v| Complex64::new(v, 0.0)),
        }
    }
}

/// Population (`1/m`) covariance of the complex row variables.
pub fn complex_cov(samples: &RowSamples) -> Result<ComplexCovariance> {
    let data = samples.data();
    let (n, m) = data.dim();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let mean = data.mean_axis(Axis(1)).expect("m >= 2");
    let centered = data - &mean.view().insert_axis(Axis(1));
    let mut sigma = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        let ri = centered.row(i);
        for j in 0..=i {
            let rj = centered.row(j);
            let acc: Complex64 = ri.iter().zip(rj.iter()).map(|(a, b)| a * b.conj()).sum();
            let v = acc / m as f64;
            if i == j {
                sigma[[i, i]] = Complex64::new(v.re, 0.0);
            } else {
                sigma[[i, j]] = v;
                sigma[[j, i]] = v.conj();
            }
        }
    }
    Ok(ComplexCovariance { sigma, mean })
}

/// Covariance of the path gains `|H_i|`.
pub fn magnitude_cov(samples: &RowSamples) -> Result<MagnitudeCovariance> {
    let mags = RowSamples::from_real(&samples.magnitudes())?;
    let cov = complex_cov(&mags)?;
    Ok(MagnitudeCovariance {
        sigma: cov.sigma.mapv(|v| v.re),
        mean: cov.mean.mapv(|v| v.re),
    })
}

/// Shift each row to zero mean and scale it to unit (complex) variance.
pub fn normalize_rows(samples: &RowSamples) -> Result<RowSamples> {
    let data = samples.data();
    let m = data.ncols() as f64;
    let mut out = data.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / m;
        let scale = row.iter().map(|v| v.norm()).sum::<f64>() / m;
        let var = row.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / m;
        if !(var > (1e-12 * scale).powi(2)) {
            return Err(Error::DegenerateRow { row: i });
        }
        let sd = var.sqrt();
        row.mapv_inplace(|v| (v - mean) / sd);
    }
    RowSamples::new(out)
}
