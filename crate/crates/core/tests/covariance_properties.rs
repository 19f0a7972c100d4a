use ma_chansim::spatialcov::{
    complex_cov, factorize, frobenius, gen_complex, magnitude_cov, normalize_rows, reconstruct, sample_covariance,
    ComplexCovariance, RowSamples, YSource,
};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use proptest::prelude::*;

fn eigenvalues(sigma: &Array2<Complex64>) -> Vec<f64> {
    let n = sigma.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| sigma[[i, j]]);
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<Complex64>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(move |v| {
        Array2::from_shape_vec((rows, cols), v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
    })
}

fn samples() -> impl Strategy<Value = Array2<Complex64>> {
    (1usize..10, 2usize..24).prop_flat_map(|(n, m)| complex_matrix(n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimated_covariance_is_hermitian_psd(data in samples()) {
        let cov = complex_cov(&RowSamples::new(data).unwrap()).unwrap();
        let n = cov.dim();
        for i in 0..n {
            prop_assert_eq!(cov.sigma[[i, i]].im, 0.0);
            prop_assert!(cov.sigma[[i, i]].re >= 0.0);
            for j in 0..n {
                prop_assert!((cov.sigma[[i, j]] - cov.sigma[[j, i]].conj()).norm() <= 1e-12);
            }
        }
        let trace: f64 = (0..n).map(|i| cov.sigma[[i, i]].re).sum();
        let min = eigenvalues(&cov.sigma).into_iter().fold(f64::MAX, f64::min);
        prop_assert!(min >= -1e-10 * trace.max(1e-300));
    }

    #[test]
    fn magnitude_covariance_is_complex_covariance_of_magnitudes(data in samples()) {
        let rows = RowSamples::new(data).unwrap();
        let mag = magnitude_cov(&rows).unwrap();
        let via_complex = complex_cov(&RowSamples::from_real(&rows.magnitudes()).unwrap()).unwrap();
        prop_assert_eq!(mag.to_complex(), via_complex);
    }

    #[test]
    fn factor_reconstructs_estimated_covariance(data in samples()) {
        let cov = complex_cov(&RowSamples::new(data).unwrap()).unwrap();
        let f = factorize(&cov.sigma).unwrap();
        let scale = frobenius(&cov.sigma);
        prop_assert!(frobenius(&(&cov.sigma - &reconstruct(&f.c))) <= 1e-10 * scale.max(1e-300));
        for i in 0..cov.dim() {
            for j in i + 1..cov.dim() {
                prop_assert_eq!(f.c[[i, j]], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn normalized_rows_have_zero_mean_unit_variance(data in samples()) {
        let rows = RowSamples::new(data).unwrap();
        if let Ok(norm) = normalize_rows(&rows) {
            let m = norm.n_samples() as f64;
            for row in norm.data().rows() {
                let mean: Complex64 = row.iter().sum::<Complex64>() / m;
                let var = row.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / m;
                prop_assert!(mean.norm() <= 1e-12);
                prop_assert!((var - 1.0).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generation_round_trip(a in (1usize..=16).prop_flat_map(|n| complex_matrix(n, n)), seed in 0u64..1000) {
        let n = a.nrows();
        let sigma = a.dot(&a.t().mapv(|v| v.conj()));
        let sigma = Array2::from_shape_fn((n, n), |(i, j)| (sigma[[i, j]] + sigma[[j, i]].conj()) * 0.5);
        let model = ComplexCovariance { sigma, mean: Array1::zeros(n) };
        let h = gen_complex(&model, &YSource::CircularUniformPhase, 10_000, seed).unwrap();
        let est = sample_covariance(&h).unwrap();
        prop_assert!(frobenius(&(&est.sigma - &model.sigma)) <= 0.05 * frobenius(&model.sigma));
    }
}
