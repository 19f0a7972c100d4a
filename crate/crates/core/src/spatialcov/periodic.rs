//! Periodic two-sinusoid model of the path-gain covariance between port rows.
//!
//! Inside the first period the covariance between row 1 and row `j` is
//!
//! ```text
//! a1 sin(b1 (d/lambda + 1) + c1) + a2 sin(b2 (d/lambda + 1) + c2)
//! ```
//!
//! with `d` the row separation. Values repeat when both rows move by 6
//! wavelengths or when one row moves by 12 wavelengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SINGLE_SHIFT_WAVELENGTHS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCovParams {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub wavelength_m: f64,
    /// Row pitch used to turn row indices into separations.
    pub spacing_m: f64,
}

impl PeriodicCovParams {
    /// Values fitted to the 300 GHz chamber measurement (1 mm wavelength and pitch).
    pub fn measured_300ghz() -> Self {
        PeriodicCovParams {
            a1: 4.116e-5,
            b1: 0.5468,
            c1: 0.004135,
            a2: 4.149e-5,
            b2: 1.6160,
            c2: 0.5212,
            wavelength_m: 1e-3,
            spacing_m: 1e-3,
        }
    }

    /// Base curve at normalized separation `x = d / lambda`.
    pub fn base(&self, x: f64) -> f64 {
        let u = x + 1.0;
        self.a1 * (self.b1 * u + self.c1).sin() + self.a2 * (self.b2 * u + self.c2).sin()
    }

    /// Rows spanned by one single-index period, when it is a whole number of rows.
    fn period_rows(&self) -> Option<usize> {
        let p = SINGLE_SHIFT_WAVELENGTHS * self.wavelength_m / self.spacing_m;
        let rounded = p.round();
        ((p - rounded).abs() < 1e-9 && rounded >= 1.0).then_some(rounded as usize)
    }

    /// Normalized separation `d / lambda` after folding into the first period.
    pub fn reduced_separation(&self, i: usize, j: usize) -> f64 {
        let sep = i.abs_diff(j);
        match self.period_rows() {
            Some(period) => (sep % period) as f64 * self.spacing_m / self.wavelength_m,
            None => {
                let d = sep as f64 * self.spacing_m;
                d.rem_euclid(SINGLE_SHIFT_WAVELENGTHS * self.wavelength_m) / self.wavelength_m
            }
        }
    }
}

/// Modeled `Cov{|H_i|, |H_j|}` for zero-based row indices `i`, `j`.
///
/// Both stated equivalences leave `|i - j| mod 12 lambda` unchanged, so the
/// value is the base curve at that reduced separation. Using the absolute
/// separation keeps the result symmetric in `(i, j)`.
pub fn cov_model_eval(i: usize, j: usize, p: &PeriodicCovParams) -> f64 {
    p.base(p.reduced_separation(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFit {
    pub params: PeriodicCovParams,
    pub residual_norm: f64,
    /// `residual_norm / ||sequence||`, zero for an all-zero sequence.
    pub relative_residual: f64,
}

/// Least-squares fit of the base curve to `Cov{|H_1|, |H_j|}`, `j = 0..len`.
///
/// The amplitudes and phases enter linearly once `(b1, b2)` are fixed, so the
/// search runs over the two frequencies only (variable projection). It starts
/// from the two strongest peaks of the zero-padded spectrum of the sequence
/// and falls back to a coarse frequency grid if that start stalls.
pub fn cov_model_fit(sequence: &[f64], wavelength_m: f64, spacing_m: f64) -> Result<PeriodicFit> {
    if sequence.len() < 6 {
        return Err(Error::InsufficientSamples {
            needed: 6,
            got: sequence.len(),
        });
    }
    if !(wavelength_m > 0.0 && spacing_m > 0.0) || sequence.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "fit needs positive wavelength/spacing and finite data".into(),
        ));
    }
    let step = spacing_m / wavelength_m;
    let u: Vec<f64> = (0..sequence.len()).map(|j| j as f64 * step + 1.0).collect();
    let norm = sequence.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nyquist = std::f64::consts::PI / step;

    let problem = Problem { u: &u, y: sequence };
    if norm == 0.0 {
        let (b1, b2) = spectral_peaks(sequence, step);
        return Ok(PeriodicFit {
            params: problem.params(b1, b2, [0.0; 4], wavelength_m, spacing_m),
            residual_norm: 0.0,
            relative_residual: 0.0,
        });
    }

    let mut best = problem.refine(spectral_peaks(sequence, step));
    if best.2 > 1e-10 * norm {
        let grid = 24;
        let mut starts = Vec::new();
        for p in 1..=grid {
            for q in p + 1..=grid {
                let b1 = nyquist * p as f64 / (grid + 1) as f64;
                let b2 = nyquist * q as f64 / (grid + 1) as f64;
                starts.push((problem.residual(b1, b2), b1, b2));
            }
        }
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, b1, b2) in starts.iter().take(6) {
            let candidate = problem.refine((b1, b2));
            if candidate.2 < best.2 {
                best = candidate;
            }
        }
    }

    let (b1, b2, residual_norm) = best;
    let theta = problem.solve(b1, b2).0;
    Ok(PeriodicFit {
        params: problem.params(b1, b2, theta, wavelength_m, spacing_m),
        residual_norm,
        relative_residual: residual_norm / norm,
    })
}

/// Frequencies (per unit of `d / lambda`) of the two largest local maxima of
/// the zero-padded DFT magnitude.
fn spectral_peaks(sequence: &[f64], step: f64) -> (f64, f64) {
    let pad = 4096;
    let omega = |k: usize| std::f64::consts::PI * k as f64 / pad as f64;
    let spectrum: Vec<f64> = (0..=pad)
        .map(|k| {
            let w = omega(k);
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in sequence.iter().enumerate() {
                re += v * (w * n as f64).cos();
                im -= v * (w * n as f64).sin();
            }
            re.hypot(im)
        })
        .collect();
    let mut peaks: Vec<usize> = (1..pad)
        .filter(|&k| spectrum[k] > spectrum[k - 1] && spectrum[k] >= spectrum[k + 1])
        .collect();
    peaks.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]));
    let to_b = |k: usize| omega(k) / step;
    match peaks.as_slice() {
        [] => (to_b(pad / 8), to_b(pad / 2)),
        [only] => (to_b(*only), (to_b(*only) * 2.0).min(std::f64::consts::PI / step)),
        [p, q, ..] => {
            let (lo, hi) = if p < q { (*p, *q) } else { (*q, *p) };
            (to_b(lo), to_b(hi))
        }
    }
}

struct Problem<'a> {
    u: &'a [f64],
    y: &'a [f64],
}

impl Problem<'_> {
    fn columns(&self, b1: f64, b2: f64) -> [Vec<f64>; 4] {
        [
            self.u.iter().map(|u| (b1 * u).sin()).collect(),
            self.u.iter().map(|u| (b1 * u).cos()).collect(),
            self.u.iter().map(|u| (b2 * u).sin()).collect(),
            self.u.iter().map(|u| (b2 * u).cos()).collect(),
        ]
    }

    /// Linear least squares for the sin/cos weights; returns the weights and residuals.
    fn solve(&self, b1: f64, b2: f64) -> ([f64; 4], Vec<f64>) {
        let cols = self.columns(b1, b2);
        let theta = least_squares(&cols, self.y);
        let resid = (0..self.y.len())
            .map(|i| self.y[i] - (0..4).map(|c| theta[c] * cols[c][i]).sum::<f64>())
            .collect();
        (theta, resid)
    }

    fn residual(&self, b1: f64, b2: f64) -> f64 {
        self.solve(b1, b2).1.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// Levenberg-Marquardt over `(b1, b2)` with a central-difference Jacobian.
    fn refine(&self, start: (f64, f64)) -> (f64, f64, f64) {
        let (mut b1, mut b2) = start;
        let mut r = self.solve(b1, b2).1;
        let mut cost: f64 = r.iter().map(|v| v * v).sum();
        let mut lambda = 1e-3;
        for _ in 0..200 {
            let h = 1e-7;
            let d1: Vec<f64> = {
                let p = self.solve(b1 + h, b2).1;
                let m = self.solve(b1 - h, b2).1;
                p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            };
            let d2: Vec<f64> = {
                let p = self.solve(b1, b2 + h).1;
                let m = self.solve(b1, b2 - h).1;
                p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            };
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let (j11, j12, j22) = (dot(&d1, &d1), dot(&d1, &d2), dot(&d2, &d2));
            let (g1, g2) = (dot(&d1, &r), dot(&d2, &r));

            let mut improved = false;
            for _ in 0..30 {
                let a11 = j11 * (1.0 + lambda);
                let a22 = j22 * (1.0 + lambda);
                let det = a11 * a22 - j12 * j12;
                if det.abs() < 1e-300 {
                    lambda *= 10.0;
                    continue;
                }
                let s1 = -(a22 * g1 - j12 * g2) / det;
                let s2 = -(a11 * g2 - j12 * g1) / det;
                let (n1, n2) = (b1 + s1, b2 + s2);
                let nr = self.solve(n1, n2).1;
                let ncost: f64 = nr.iter().map(|v| v * v).sum();
                if ncost < cost {
                    let converged = (cost - ncost) <= 1e-15 * cost || s1.abs().max(s2.abs()) < 1e-13;
                    b1 = n1;
                    b2 = n2;
                    r = nr;
                    cost = ncost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !converged;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (b1, b2, cost.sqrt())
    }

    fn params(&self, b1: f64, b2: f64, theta: [f64; 4], wavelength_m: f64, spacing_m: f64) -> PeriodicCovParams {
        // p sin(bu) + q cos(bu) = a sin(bu + c) with a = |(p, q)|, c = atan2(q, p).
        PeriodicCovParams {
            a1: theta[0].hypot(theta[1]),
            b1,
            c1: theta[1].atan2(theta[0]),
            a2: theta[2].hypot(theta[3]),
            b2,
            c2: theta[3].atan2(theta[2]),
            wavelength_m,
            spacing_m,
        }
    }
}

/// Minimum-norm-ish least squares via modified Gram-Schmidt; columns that are
/// numerically dependent on earlier ones get a zero weight.
fn least_squares(cols: &[Vec<f64>; 4], y: &[f64]) -> [f64; 4] {
    let n = y.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(4);
    let mut r = [[0.0f64; 4]; 4];
    let mut kept = [false; 4];
    for c in 0..4 {
        let mut v = cols[c].clone();
        let original = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (k, qk) in q.iter().enumerate() {
            let proj: f64 = (0..n).map(|i| qk[i] * v[i]).sum();
            r[k][c] = proj;
            for i in 0..n {
                v[i] -= proj * qk[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * original.max(1e-300) {
            let idx = q.len();
            r[idx][c] = norm;
            q.push(v.into_iter().map(|x| x / norm).collect());
            kept[c] = true;
        } else {
            q.push(vec![0.0; n]);
        }
    }
    let qty: Vec<f64> = q.iter().map(|qk| (0..n).map(|i| qk[i] * y[i]).sum()).collect();
    let mut theta = [0.0; 4];
    for c in (0..4).rev() {
        if !kept[c] {
            continue;
        }
        let mut v = qty[c];
        for k in c + 1..4 {
            v -= r[c][k] * theta[k];
        }
        theta[c] = v / r[c][c];
    }
    theta
}
