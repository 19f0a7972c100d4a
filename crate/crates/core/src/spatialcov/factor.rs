//! Hermitian factorization `Sigma = C C^H` for correlated sample generation.
//!
//! Positive definite inputs take the Cholesky route. Semidefinite inputs fall
//! back to `L D L^H` with `C = L sqrt(D)`, where pivots in
//! `[-1e-10, 1e-12] * max(diag)` are clamped to zero.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative Hermitian-symmetry tolerance.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Pivots below `-NEGATIVE_PIVOT_TOL * max(diag)` make the input indefinite.
pub const NEGATIVE_PIVOT_TOL: f64 = 1e-10;
/// Pivots at or below `ZERO_PIVOT_TOL * max(diag)` count as zero.
pub const ZERO_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorKind {
    Cholesky,
    Ldl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    /// Lower-triangular factor with `Sigma = C C^H`.
    pub c: Array2<Complex64>,
    pub kind: FactorKind,
    /// Pivots clamped to zero (LDL route only).
    pub clamped: usize,
}

pub fn factorize(sigma: &Array2<Complex64>) -> Result<Factor> {
    let scale = check_hermitian(sigma)?;
    match cholesky_scaled(sigma, scale) {
        Some(c) => Ok(Factor {
            c,
            kind: FactorKind::Cholesky,
            clamped: 0,
        }),
        None => {
            let (l, d) = ldl_scaled(sigma, scale)?;
            let clamped = d.iter().filter(|&&v| v == 0.0).count();
            let c = Array2::from_shape_fn(l.dim(), |(i, j)| l[[i, j]] * d[j].sqrt());
            Ok(Factor {
                c,
                kind: FactorKind::Ldl,
                clamped,
            })
        }
    }
}

pub fn factorize_real(sigma: &Array2<f64>) -> Result<Factor> {
    factorize(&sigma.mapv(|v| Complex64::new(v, 0.0)))
}

/// Cholesky factor, or `None` when a pivot is not safely positive.
pub fn cholesky(sigma: &Array2<Complex64>) -> Result<Option<Array2<Complex64>>> {
    let scale = check_hermitian(sigma)?;
    Ok(cholesky_scaled(sigma, scale))
}

/// Unit lower-triangular `L` and clamped diagonal `D` with `Sigma = L D L^H`.
pub fn ldl(sigma: &Array2<Complex64>) -> Result<(Array2<Complex64>, Vec<f64>)> {
    let scale = check_hermitian(sigma)?;
    ldl_scaled(sigma, scale)
}

/// Validates shape and symmetry; returns the largest diagonal entry.
fn check_hermitian(sigma: &Array2<Complex64>) -> Result<f64> {
    let (n, m) = sigma.dim();
    if n != m {
        return Err(Error::Shape(format!("covariance must be square, got {n}x{m}")));
    }
    let magnitude = sigma.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !magnitude.is_finite() {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    let mut deviation: f64 = 0.0;
    for i in 0..n {
        deviation = deviation.max(sigma[[i, i]].im.abs());
        for j in 0..i {
            deviation = deviation.max((sigma[[i, j]] - sigma[[j, i]].conj()).norm());
        }
    }
    if deviation > HERMITIAN_TOL * magnitude {
        return Err(Error::NotHermitian { deviation });
    }
    Ok((0..n).map(|i| sigma[[i, i]].re).fold(0.0, f64::max))
}

fn cholesky_scaled(sigma: &Array2<Complex64>, scale: f64) -> Option<Array2<Complex64>> {
    let n = sigma.nrows();
    let mut c = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut d = sigma[[j, j]].re;
        for k in 0..j {
            d -= c[[j, k]].norm_sqr();
        }
        if !(d > ZERO_PIVOT_TOL * scale) {
            return None;
        }
        let djj = d.sqrt();
        c[[j, j]] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut v = sigma[[i, j]];
            for k in 0..j {
                v -= c[[i, k]] * c[[j, k]].conj();
            }
            c[[i, j]] = v / djj;
        }
    }
    Some(c)
}

fn ldl_scaled(sigma: &Array2<Complex64>, scale: f64) -> Result<(Array2<Complex64>, Vec<f64>)> {
    let n = sigma.nrows();
    let mut l = Array2::<Complex64>::zeros((n, n));
    let mut d = vec![0.0; n];
    for j in 0..n {
        l[[j, j]] = Complex64::new(1.0, 0.0);
        let mut pivot = sigma[[j, j]].re;
        for k in 0..j {
            pivot -= l[[j, k]].norm_sqr() * d[k];
        }
        if pivot < -NEGATIVE_PIVOT_TOL * scale {
            return Err(Error::Indefinite { index: j, pivot });
        }
        let zero = pivot <= ZERO_PIVOT_TOL * scale;
        for i in j + 1..n {
            let mut v = sigma[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]].conj() * d[k];
            }
            if zero {
                // A PSD matrix has |r_ij|^2 <= r_ii r_jj, which is ~0 here.
                if v.norm() > 1e-5 * scale {
                    return Err(Error::Indefinite { index: j, pivot });
                }
            } else {
                l[[i, j]] = v / pivot;
            }
        }
        d[j] = if zero { 0.0 } else { pivot };
    }
    Ok((l, d))
}

/// `C C^H`.
pub fn reconstruct(c: &Array2<Complex64>) -> Array2<Complex64> {
    let ch = c.t().mapv(|v| v.conj());
    c.dot(&ch)
}

pub fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel_error(sigma: &Array2<Complex64>, f: &Factor) -> f64 {
        frobenius(&(sigma - &reconstruct(&f.c))) / frobenius(sigma)
    }

    #[test]
    fn identity() {
        let eye = Array2::from_shape_fn((3, 3), |(i, j)| c(if i == j { 1.0 } else { 0.0 }, 0.0));
        let f = factorize(&eye).unwrap();
        assert_eq!(f.kind, FactorKind::Cholesky);
        assert_eq!(f.c, eye);
    }

    #[test]
    fn two_by_two_closed_form() {
        let sigma = array![[c(1.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(1.0, 0.0)]];
        let f = factorize(&sigma).unwrap();
        assert_eq!(f.c[[0, 0]], c(1.0, 0.0));
        assert_eq!(f.c[[0, 1]], c(0.0, 0.0));
        assert_eq!(f.c[[1, 0]], c(0.5, 0.0));
        assert!((f.c[[1, 1]] - c(0.75f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_hermitian_takes_ldl_route() {
        let sigma = array![[c(1.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(1.0, 0.0)]];
        let f = factorize(&sigma).unwrap();
        assert_eq!(f.kind, FactorKind::Ldl);
        assert_eq!(f.clamped, 1);
        assert!(rel_error(&sigma, &f) < 1e-15);
        assert_eq!(f.c[[1, 0]], c(0.0, -1.0));
    }

    #[test]
    fn ldl_agrees_with_cholesky_on_positive_definite() {
        let sigma = array![
            [c(4.0, 0.0), c(1.0, 2.0), c(0.0, -1.0)],
            [c(1.0, -2.0), c(6.0, 0.0), c(0.5, 0.5)],
            [c(0.0, 1.0), c(0.5, -0.5), c(3.0, 0.0)]
        ];
        let chol = cholesky(&sigma).unwrap().unwrap();
        let (l, d) = ldl(&sigma).unwrap();
        let via_ldl = Array2::from_shape_fn(l.dim(), |(i, j)| l[[i, j]] * d[j].sqrt());
        for (a, b) in chol.iter().zip(via_ldl.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_factors_to_zero() {
        let f = factorize(&Array2::zeros((3, 3))).unwrap();
        assert_eq!(f.kind, FactorKind::Ldl);
        assert_eq!(f.clamped, 3);
        assert!(f.c.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn rejects_non_hermitian_and_indefinite() {
        let skew = array![[c(1.0, 0.0), c(0.5, 0.0)], [c(0.4, 0.0), c(1.0, 0.0)]];
        assert!(matches!(factorize(&skew), Err(Error::NotHermitian { .. })));
        let indefinite = array![[c(1.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(1.0, 0.0)]];
        assert!(matches!(
            factorize(&indefinite),
            Err(Error::Indefinite { index: 1, .. })
        ));
        let zero_pivot = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        assert!(matches!(
            factorize(&zero_pivot),
            Err(Error::Indefinite { index: 0, .. })
        ));
        assert!(matches!(factorize(&Array2::zeros((2, 3))), Err(Error::Shape(_))));
    }

    #[test]
    fn tiny_negative_tail_is_clamped() {
        let eps = 1e-12;
        let sigma = array![[c(1.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(1.0 - eps, 0.0)]];
        let f = factorize(&sigma).unwrap();
        assert_eq!(f.kind, FactorKind::Ldl);
        assert!(rel_error(&sigma, &f) < 1e-10);
    }
}
