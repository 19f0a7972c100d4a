//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ma_chansim::beamsweep::{analog_precoder, dbm_to_mw, improvement_table, selection_se, SweepSpec};
use ma_chansim::chanstore::{ChannelDataset, FrequencyGrid, Normalization, PortCoefficientField, PortGrid};
use ma_chansim::portselect::{partition_regions, select_greedy, select_uniform, select_worst, MaConfig, Port, Scheme};
use ma_chansim::rayextract::{ctf_to_cir, extract_all_ports, extract_rays, ExtractOptions, Window};
use ma_chansim::spatialcov::{
    cov_model_eval, factorize, frobenius, gen_complex, reconstruct, sample_covariance, uniform_variates,
    ComplexCovariance, PeriodicCovParams, YSource,
};
use ma_chansim::tworay::{synth_ctf, RayCalibration, RayKind, TwoRayGeometry, TwoRayModel};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn default_dataset() -> ChannelDataset {
    let grid = PortGrid::new(32, 32, 1e-3).unwrap();
    synth_ctf(
        &grid,
        &FrequencyGrid::default(),
        TwoRayGeometry::default(),
        RayCalibration::default(),
    )
    .unwrap()
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

fn calibration_anchors() -> Verdict {
    let start = Instant::now();
    let ds = default_dataset();
    let (r, c) = (ds.grid.center_row, ds.grid.center_col);
    let cir = ctf_to_cir(&ds.port_ctf(r, c), &ds.freq, Window::None).map_err(|e| e.to_string())?;
    let ex = extract_rays(&cir, &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let los = ex.ray(RayKind::Los).ok_or("no LoS ray")?;
    let refl = ex.ray(RayKind::Reflected).ok_or("no reflected ray")?;
    let bin = 16.7e-12;
    let checks = [
        ("LoS delay", (los.delay_s - 2.8638e-9).abs(), bin),
        ("reflected delay", (refl.delay_s - 3.54645e-9).abs(), bin),
        ("LoS gain", (los.gain_db() + 79.6).abs(), 0.5),
        ("reflected gain", (refl.gain_db() + 89.95).abs(), 0.5),
    ];
    for (name, err, tol) in checks {
        ensure(err <= tol, || format!("{name} off by {err:e} (tol {tol:e})"))?;
    }
    within_time(start, Duration::from_secs(10))?;
    Ok(format!(
        "LoS {:.4} ns / {:.3} dB, reflected {:.4} ns / {:.3} dB, bin {:.2} ps",
        los.delay_s * 1e9,
        los.gain_db(),
        refl.delay_s * 1e9,
        refl.gain_db(),
        cir.bin_spacing_s * 1e12
    ))
}

fn corner_taper() -> Verdict {
    let ds = default_dataset();
    let grid = ds.grid;
    let model = TwoRayModel::new(&grid, TwoRayGeometry::default(), RayCalibration::default()).unwrap();
    // Farthest corner from the receiver-aligned port, by direct search.
    let (mut far, mut best) = ((0, 0), -1.0);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let d = grid.dx(c).hypot(grid.dz(r));
            if d > best {
                best = d;
                far = (r, c);
            }
        }
    }
    let f = ds.freq.f_start_hz;
    let gain = |r: usize, c: usize| model.ray_components(grid.dx(c), grid.dz(r), f).los.gain_db();
    let model_drop = gain(grid.center_row, grid.center_col) - gain(far.0, far.1);
    ensure((model_drop - 0.6686).abs() <= 0.01, || {
        format!("model drop {model_drop:.5} dB")
    })?;

    let opts = ExtractOptions::default();
    let extracted = |r: usize, c: usize| -> Result<f64, String> {
        let cir = ctf_to_cir(&ds.port_ctf(r, c), &ds.freq, Window::None).map_err(|e| e.to_string())?;
        let ex = extract_rays(&cir, &opts).map_err(|e| e.to_string())?;
        Ok(ex.ray(RayKind::Los).ok_or("no LoS ray")?.gain_db())
    };
    let drop = extracted(grid.center_row, grid.center_col)? - extracted(far.0, far.1)?;
    ensure((drop - 0.6686).abs() <= 0.01, || format!("extracted drop {drop:.5} dB"))?;
    Ok(format!(
        "corner ({}, {}): synthesized drop {model_drop:.5} dB, extracted drop {drop:.5} dB",
        far.0, far.1
    ))
}

fn transform_properties() -> Verdict {
    let start = Instant::now();
    let freq = FrequencyGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ctf: Vec<Complex64> = (0..freq.n_points).map(|_| random_complex(&mut rng)).collect();
        let cir = ctf_to_cir(&ctf, &freq, Window::None).map_err(|e| e.to_string())?;
        let mean_power = ctf.iter().map(|v| v.norm_sqr()).sum::<f64>() / ctf.len() as f64;
        let energy: f64 = cir.bins.iter().map(|v| v.norm_sqr()).sum();
        worst = worst.max((energy - mean_power).abs() / mean_power);
    }
    ensure(worst <= 1e-10, || format!("Parseval relative error {worst:e}"))?;

    let ds = default_dataset();
    let grid = ds.grid;
    let model = TwoRayModel::new(&grid, TwoRayGeometry::default(), RayCalibration::default()).unwrap();
    let extractions = extract_all_ports(&ds, Window::None, &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let bin = 1.0 / (freq.n_points as f64 * freq.step_hz());
    let (mut max_dt, mut max_dg) = (0.0f64, 0.0f64);
    for (idx, ex) in extractions.iter().enumerate() {
        let (r, c) = (idx / grid.cols, idx % grid.cols);
        let truth = model.ray_components(grid.dx(c), grid.dz(r), freq.f_start_hz);
        let truth_refl = truth.reflected.ok_or("model has no reflected ray")?;
        for (kind, t) in [(RayKind::Los, truth.los), (RayKind::Reflected, truth_refl)] {
            let got = ex
                .ray(kind)
                .ok_or_else(|| format!("port ({r}, {c}) lost the {kind:?} ray"))?;
            max_dt = max_dt.max((got.delay_s - t.delay_s).abs());
            max_dg = max_dg.max((got.gain_db() - t.gain_db()).abs());
        }
    }
    ensure(max_dt <= bin, || {
        format!("delay error {:.3} ps exceeds one bin", max_dt * 1e12)
    })?;
    ensure(max_dg <= 0.5, || format!("gain error {max_dg:.4} dB"))?;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "Parseval max rel err {worst:.2e}; 1024 ports: max delay err {:.3} ps, max gain err {max_dg:.4} dB",
        max_dt * 1e12
    ))
}

fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    let a = Array2::from_shape_fn((n, rank), |_| random_complex(rng));
    let s = a.dot(&a.t().mapv(|v| v.conj()));
    Array2::from_shape_fn((n, n), |(i, j)| (s[[i, j]] + s[[j, i]].conj()) * 0.5)
}

fn factorization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut deficient) = (0.0f64, 0);
    for k in 0..200 {
        let n = rng.random_range(1..=64);
        let rank = if k % 2 == 0 { n } else { rng.random_range(1..=n) };
        if rank < n {
            deficient += 1;
        }
        let sigma = random_psd(n, rank, &mut rng);
        let f = factorize(&sigma).map_err(|e| format!("n={n} rank={rank}: {e}"))?;
        let err = frobenius(&(&sigma - &reconstruct(&f.c))) / frobenius(&sigma);
        worst = worst.max(err);
    }
    ensure(worst <= 1e-10, || format!("reconstruction error {worst:e}"))?;
    Ok(format!(
        "200 matrices ({deficient} rank-deficient), max rel err {worst:.2e}"
    ))
}

fn generation_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for (k, n) in [2, 4, 8, 12, 16, 16].into_iter().enumerate() {
        let rank = if k == 5 { 8 } else { n };
        let sigma = random_psd(n, rank, &mut rng);
        let mean = Array1::from_shape_fn(n, |_| random_complex(&mut rng));
        let model = ComplexCovariance { sigma, mean };
        let h = gen_complex(&model, &YSource::CircularUniformPhase, 10_000, 2024).map_err(|e| e.to_string())?;
        let est = sample_covariance(&h).map_err(|e| e.to_string())?;
        let err = frobenius(&(&est.sigma - &model.sigma)) / frobenius(&model.sigma);
        worst = worst.max(err);
    }
    ensure(worst <= 0.05, || format!("covariance round-trip error {worst:.4}"))?;

    let x = uniform_variates(1, 100_000, 77);
    let mean = x.sum() / 1e5;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1e5;
    let bound = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(mean.abs() <= 0.02, || format!("uniform mean {mean}"))?;
    ensure((0.95..=1.05).contains(&var), || format!("uniform variance {var}"))?;
    ensure(bound <= 3f64.sqrt(), || format!("uniform support reaches {bound}"))?;
    Ok(format!(
        "max rel Frobenius err {worst:.4}; uniform mean {mean:.4}, var {var:.4}, max |x| {bound:.4}"
    ))
}

fn periodic_model() -> Verdict {
    let p = PeriodicCovParams::measured_300ghz();
    // Hand evaluation of the base curve at zero separation (argument d/lambda + 1 = 1).
    let hand = 4.116e-5 * (0.5468f64 + 0.004135).sin() + 4.149e-5 * (1.6160f64 + 0.5212).sin();
    let v = cov_model_eval(0, 0, &p);
    ensure((v - hand).abs() <= 1e-9, || format!("eval(0,0) = {v:e}, hand {hand:e}"))?;
    ensure((v - 5.66e-5).abs() < 5e-7, || {
        format!("eval(0,0) = {v:e}, expected about 5.66e-5")
    })?;
    for i in 0..40 {
        for j in 0..40 {
            let a = cov_model_eval(i, j, &p);
            ensure(a == cov_model_eval(i + 6, j + 6, &p), || {
                format!("shift-6 identity fails at ({i}, {j})")
            })?;
        }
        let a = cov_model_eval(0, i, &p);
        ensure(a == cov_model_eval(0, i + 12, &p), || {
            format!("shift-12 identity fails at j={i}")
        })?;
    }
    Ok(format!(
        "base value {v:.6e} (hand {hand:.6e}); identities exact on 40x40 index pairs"
    ))
}

/// Ports of region `(a, b)` of an `m x n` floor partition, computed directly.
fn oracle_regions(size: usize, m: usize, n: usize) -> Vec<Vec<Port>> {
    let (h, w) = (size / m, size / n);
    let mut out = Vec::new();
    for a in 0..m {
        for b in 0..n {
            let mut ports = Vec::new();
            for r in a * h..(a + 1) * h {
                for c in b * w..(b + 1) * w {
                    ports.push(Port::new(r, c));
                }
            }
            out.push(ports);
        }
    }
    out
}

/// Best and worst one-port-per-region placement by full enumeration of the
/// product of regions, scored by the sum of `|h|` (the SE objective).
fn enumerate_regions(mags: &Array2<f64>, regions: &[Vec<Port>]) -> (Vec<Port>, Vec<Port>) {
    let mut idx = vec![0usize; regions.len()];
    let (mut best, mut worst) = ((f64::MIN, Vec::new()), (f64::MAX, Vec::new()));
    loop {
        let pick: Vec<Port> = idx.iter().zip(regions).map(|(&i, reg)| reg[i]).collect();
        let score: f64 = pick.iter().map(|p| mags[[p.row, p.col]]).sum();
        if score > best.0 {
            best = (score, pick.clone());
        }
        if score < worst.0 {
            worst = (score, pick);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return (best.1, worst.1);
            }
            idx[k] += 1;
            if idx[k] < regions[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Best `k`-subset of all ports by full enumeration of combinations.
fn enumerate_subsets(mags: &[f64], k: usize) -> Vec<usize> {
    let n = mags.len();
    let mut comb: Vec<usize> = (0..k).collect();
    let (mut best, mut best_set) = (f64::MIN, comb.clone());
    loop {
        let s: f64 = comb.iter().map(|&i| mags[i]).sum();
        if s > best {
            best = s;
            best_set = comb.clone();
        }
        let mut i = k;
        while i > 0 && comb[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best_set;
        }
        comb[i - 1] += 1;
        for j in i..k {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

fn random_field(rng: &mut ChaCha8Rng, size: usize) -> PortCoefficientField {
    let grid = PortGrid::new(size, size, 1e-3).unwrap();
    let h = Array2::from_shape_fn((size, size), |_| random_complex(rng));
    PortCoefficientField::new(grid, h, Normalization::Raw).unwrap()
}

fn selection_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let types = [
        MaConfig::new(2, 1),
        MaConfig::new(1, 2),
        MaConfig::new(2, 2),
        MaConfig::new(4, 1),
    ];
    let (p, noise) = (1.0, 4.89e-6);
    for trial in 0..100 {
        let field = random_field(&mut rng, 8);
        let mags = field.h.mapv(|v| v.norm());
        let flat: Vec<f64> = mags.iter().copied().collect();
        for ma in types {
            let regions = partition_regions(8, 8, ma).map_err(|e| e.to_string())?;
            let (best, worst) = enumerate_regions(&mags, &oracle_regions(8, ma.m, ma.n));
            let u = select_uniform(&field, &regions, p, noise).map_err(|e| e.to_string())?;
            let w = select_worst(&field, &regions, p, noise).map_err(|e| e.to_string())?;
            ensure(u.positions == best, || {
                format!("trial {trial} {}: uniform differs", ma.label())
            })?;
            ensure(w.positions == worst, || {
                format!("trial {trial} {}: worst differs", ma.label())
            })?;
            let g = select_greedy(&field, ma.n_t(), p, noise).map_err(|e| e.to_string())?;
            let mut got: Vec<usize> = g.positions.iter().map(|q| q.row * 8 + q.col).collect();
            got.sort();
            let expected = enumerate_subsets(&flat, ma.n_t());
            ensure(got == expected, || {
                format!("trial {trial} {}: greedy differs", ma.label())
            })?;
        }
    }
    Ok("100 random 8x8 fields x {2x1, 1x2, 2x2, 4x1}: all three schemes match enumeration".into())
}

fn beamforming() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec = SweepSpec::default();
    let types = [
        MaConfig::new(2, 1),
        MaConfig::new(1, 2),
        MaConfig::new(2, 2),
        MaConfig::new(4, 1),
        MaConfig::new(1, 1),
    ];
    let (mut instances, mut worst_cm) = (0usize, 0.0f64);
    let mut check_field = |field: &PortCoefficientField, size: usize| -> Result<(), String> {
        for ma in types {
            if !ma.fits(size, size) {
                continue;
            }
            let regions = partition_regions(size, size, ma).map_err(|e| e.to_string())?;
            let p0 = dbm_to_mw(spec.p_start_dbm);
            let sels = [
                select_greedy(field, ma.n_t(), p0, spec.noise_mw).map_err(|e| e.to_string())?,
                select_uniform(field, &regions, p0, spec.noise_mw).map_err(|e| e.to_string())?,
                select_worst(field, &regions, p0, spec.noise_mw).map_err(|e| e.to_string())?,
            ];
            for sel in &sels {
                let h = sel.channel(field).map_err(|e| e.to_string())?;
                let f = analog_precoder(&h).map_err(|e| e.to_string())?;
                let a = (h.len() as f64).sqrt().recip();
                for x in &f.f {
                    worst_cm = worst_cm.max((x.norm() - a).abs());
                }
            }
            let mut prev: Option<[f64; 3]> = None;
            for p_dbm in spec.powers_dbm() {
                let mut se = [0.0; 3];
                for (k, sel) in sels.iter().enumerate() {
                    se[k] = selection_se(field, sel, p_dbm, spec.noise_mw).map_err(|e| e.to_string())?;
                }
                let tol = 1e-12 * se[0].max(1.0);
                ensure(se[0] >= se[1] - tol && se[1] >= se[2] - tol, || {
                    format!(
                        "{} at {p_dbm} dBm: greedy {} uniform {} worst {}",
                        ma.label(),
                        se[0],
                        se[1],
                        se[2]
                    )
                })?;
                if let Some(prev) = prev {
                    for k in 0..3 {
                        ensure(se[k] > prev[k], || format!("SE not increasing at {p_dbm} dBm"))?;
                    }
                }
                prev = Some(se);
                instances += 1;
            }
        }
        Ok(())
    };
    for _ in 0..100 {
        let field = random_field(&mut rng, 8);
        check_field(&field, 8)?;
    }
    let ds = default_dataset();
    let full = ma_chansim::chanstore::narrowband_slice(&ds, spec.carrier_hz, spec.normalization).unwrap();
    check_field(&full, 32)?;
    ensure(worst_cm <= 1e-12, || format!("constant-modulus deviation {worst_cm:e}"))?;
    Ok(format!(
        "{instances} (instance, power) checks; max |f_i| deviation {worst_cm:.1e}; SE strictly increasing 0-20 dBm"
    ))
}

fn table_analog() -> Verdict {
    let start = Instant::now();
    let ds = default_dataset();
    let spec = SweepSpec::default();
    ensure(
        spec.normalization == Normalization::UnitMeanPower && spec.noise_mw == 4.89e-6,
        || "unexpected sweep defaults".into(),
    )?;
    let ma_list: Vec<MaConfig> = [2, 4, 8, 16].iter().map(|&m| MaConfig::new(m, 1)).collect();
    let areas = [32, 16, 8, 4, 2];
    let report = improvement_table(&ds, &ma_list, &areas, &spec).map_err(|e| e.to_string())?;

    let four = report.cell(MaConfig::new(4, 1), 32).ok_or("missing 4x1 cell")?;
    let min_ratio = four.ratio_to_greedy.iter().copied().fold(f64::MAX, f64::min);
    ensure(four.ratio_to_greedy.len() == 21, || {
        "ratio not reported at every power".into()
    })?;
    ensure(min_ratio >= 0.95, || format!("4x1 uniform/greedy ratio {min_ratio:.4}"))?;

    let two = report.cell(MaConfig::new(2, 1), 32).ok_or("missing 2x1 cell")?;
    let improvement = two.improvement_pct.ok_or("no 2x1 improvement")?;
    ensure(improvement > 0.0, || format!("2x1 improvement {improvement}"))?;

    let csv = report.improvement_doc().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    ensure(lines.first() == Some(&"ma,32x32,16x16,8x8,4x4,2x2"), || {
        format!("table header {:?}", lines.first())
    })?;
    ensure(lines.len() == 5, || format!("table has {} lines", lines.len()))?;
    let slashes: Vec<usize> = lines[1..].iter().map(|l| l.matches('/').count()).collect();
    ensure(slashes == vec![0, 1, 2, 3], || {
        format!("infeasible cells per row {slashes:?}")
    })?;

    let se0 = four
        .curve(Scheme::UniformRegion)
        .and_then(|c| c.at(0.0))
        .ok_or("no 0 dBm point")?;
    ensure((15.0..=22.0).contains(&se0), || {
        format!("4-antenna SE at 0 dBm {se0:.3}")
    })?;
    within_time(start, Duration::from_secs(300))?;
    Ok(format!(
        "4x1 min ratio {min_ratio:.4}; 2x1/32x32 improvement {improvement:.2}%; 4x1 SE(0 dBm) {se0:.3} bits/s/Hz; table rows {}",
        lines[1..].join(" | ")
    ))
}

fn collect_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.json");
    std::fs::write(&config, r#"{"seed": 11, "covariance": {"count": 2000}}"#).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4")] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_ma-chansim"))
            .args(["report", "--seed", "11", "--threads", threads, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env_remove("MA_CHANSIM_OUT")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("run {name} failed: {}", String::from_utf8_lossy(&status.stderr))
        })?;
        outputs.push(collect_files(&out));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let names_a: Vec<&String> = a.iter().map(|f| &f.0).collect();
    let names_b: Vec<&String> = b.iter().map(|f| &f.0).collect();
    ensure(names_a == names_b, || "runs wrote different file sets".into())?;
    let artifacts = a
        .iter()
        .filter(|f| f.0.ends_with(".csv") || f.0.ends_with(".json"))
        .count();
    for (fa, fb) in a.iter().zip(b) {
        ensure(fa.1 == fb.1, || format!("{} differs between runs", fa.0))?;
    }
    Ok(format!(
        "{} files ({artifacts} CSV/JSON) byte-identical across runs with 1 and 4 threads",
        a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "calibration anchors", calibration_anchors),
        (2, "corner taper", corner_taper),
        (3, "transform properties", transform_properties),
        (4, "factorization", factorization),
        (5, "generation round-trip", generation_round_trip),
        (6, "periodic covariance model", periodic_model),
        (7, "selection correctness", selection_correctness),
        (8, "beamforming", beamforming),
        (9, "desk-scale table analog", table_analog),
        (10, "determinism", determinism),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {id:>2} PASS {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name} ({secs:.1} s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
