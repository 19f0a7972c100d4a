//! Analog beamforming and spectral-efficiency evaluation of selected ports.
//!
//! The selected ports form a single-stream MISO channel `h` toward one receive
//! antenna. The precoder is the conjugate MRT direction projected onto
//! constant-modulus phase shifters, so `|h f| = sum |h_i| / sqrt(N_t)`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanstore::{narrowband_slice, ChannelDataset, Normalization, PortCoefficientField};
use crate::error::{Error, Result};
use crate::portselect::{
    check_powers, partition_regions, select_greedy, select_uniform, select_worst, MaConfig, Port, Scheme,
    SelectionResult,
};

/// Transmit power at which improvement percentages are quoted.
pub const REPORT_POWER_DBM: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub f: Vec<Complex64>,
    /// Constant-modulus (phase-shifter only).
    pub constrained: bool,
}

impl Precoder {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `conj(h) / ||h||`, the unit-norm maximizer of `|h f|`.
pub fn mrt_precoder(h: &[Complex64]) -> Result<Precoder> {
    let n = norm(h);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DegenerateChannel);
    }
    Ok(Precoder {
        f: h.iter().map(|x| x.conj() / n).collect(),
        constrained: false,
    })
}

/// Keeps each element's phase and sets its magnitude to `1/sqrt(N_t)`.
/// Zero elements get phase zero.
pub fn project_constant_modulus(f_opt: &Precoder) -> Precoder {
    let a = (f_opt.len() as f64).sqrt().recip();
    Precoder {
        f: f_opt
            .f
            .iter()
            .map(|x| {
                if x.norm() == 0.0 {
                    Complex64::new(a, 0.0)
                } else {
                    Complex64::from_polar(a, x.arg())
                }
            })
            .collect(),
        constrained: true,
    }
}

/// `h f` (plain product, no conjugation).
pub fn effective_gain(h: &[Complex64], f: &Precoder) -> Result<Complex64> {
    if h.len() != f.len() {
        return Err(Error::Shape(format!(
            "channel has {} entries, precoder {}",
            h.len(),
            f.len()
        )));
    }
    Ok(h.iter().zip(&f.f).map(|(a, b)| a * b).sum())
}

/// `log2(1 + p/sigma^2 |h f|^2)` in bits/s/Hz.
pub fn spectral_efficiency(h: &[Complex64], f: &Precoder, p_mw: f64, noise_mw: f64) -> Result<f64> {
    check_powers(p_mw, noise_mw)?;
    let g = effective_gain(h, f)?;
    Ok((p_mw / noise_mw * g.norm_sqr()).ln_1p() / std::f64::consts::LN_2)
}

/// Constant-modulus MRT precoder for `h`.
pub fn analog_precoder(h: &[Complex64]) -> Result<Precoder> {
    Ok(project_constant_modulus(&mrt_precoder(h)?))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub p_start_dbm: f64,
    pub p_stop_dbm: f64,
    pub p_step_db: f64,
    pub noise_mw: f64,
    pub carrier_hz: f64,
    pub normalization: Normalization,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            p_start_dbm: 0.0,
            p_stop_dbm: 20.0,
            p_step_db: 1.0,
            noise_mw: 4.89e-6,
            carrier_hz: 290e9,
            normalization: Normalization::UnitMeanPower,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.p_start_dbm, self.p_stop_dbm, self.p_step_db, self.carrier_hz]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.p_start_dbm > self.p_stop_dbm {
            return Err(Error::InvalidParameter(format!(
                "power sweep {} .. {} dBm is not a valid range",
                self.p_start_dbm, self.p_stop_dbm
            )));
        }
        if !(self.p_step_db > 0.0) && self.p_start_dbm < self.p_stop_dbm {
            return Err(Error::InvalidParameter(format!(
                "power step must be positive, got {}",
                self.p_step_db
            )));
        }
        check_powers(0.0, self.noise_mw)
    }

    /// Sweep points in dBm, `p_start + k step` up to `p_stop` inclusive.
    pub fn powers_dbm(&self) -> Vec<f64> {
        if self.p_start_dbm >= self.p_stop_dbm {
            return vec![self.p_start_dbm];
        }
        let span = (self.p_stop_dbm - self.p_start_dbm) / self.p_step_db;
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| self.p_start_dbm + k as f64 * self.p_step_db)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SePoint {
    pub p_dbm: f64,
    pub se_bits_per_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeCurve {
    pub scheme: Scheme,
    pub points: Vec<SePoint>,
}

impl SeCurve {
    pub fn at(&self, p_dbm: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|pt| (pt.p_dbm - p_dbm).abs() < 1e-9)
            .map(|pt| pt.se_bits_per_hz)
    }
}

/// SE of the selected ports under the constant-modulus MRT precoder at every
/// sweep power.
pub fn run_power_sweep(field: &PortCoefficientField, selection: &SelectionResult, spec: &SweepSpec) -> Result<SeCurve> {
    spec.validate()?;
    let h = selection.channel(field)?;
    let f = analog_precoder(&h)?;
    let points = spec
        .powers_dbm()
        .into_iter()
        .map(|p_dbm| {
            Ok(SePoint {
                p_dbm,
                se_bits_per_hz: spectral_efficiency(&h, &f, dbm_to_mw(p_dbm), spec.noise_mw)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeCurve {
        scheme: selection.scheme,
        points,
    })
}

/// SE of a selection at one power.
pub fn selection_se(
    field: &PortCoefficientField,
    selection: &SelectionResult,
    p_dbm: f64,
    noise_mw: f64,
) -> Result<f64> {
    let h = selection.channel(field)?;
    spectral_efficiency(&h, &analog_precoder(&h)?, dbm_to_mw(p_dbm), noise_mw)
}

/// One (MA, area) cell of the improvement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub ma: MaConfig,
    pub area: usize,
    /// False when the MA does not fit inside the area.
    pub feasible: bool,
    pub leftover_ports: usize,
    pub uniform_positions: Vec<Port>,
    pub greedy_positions: Vec<Port>,
    pub worst_positions: Vec<Port>,
    pub curves: Vec<SeCurve>,
    /// `(SE_uniform - SE_worst) / SE_worst * 100` at [`REPORT_POWER_DBM`].
    pub improvement_pct: Option<f64>,
    /// `SE_uniform / SE_greedy` at every sweep power.
    pub ratio_to_greedy: Vec<f64>,
}

impl TableCell {
    pub fn curve(&self, scheme: Scheme) -> Option<&SeCurve> {
        self.curves.iter().find(|c| c.scheme == scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub normalization: Normalization,
    pub carrier_hz: f64,
    pub noise_mw: f64,
    pub report_power_dbm: f64,
    pub powers_dbm: Vec<f64>,
    pub ma_list: Vec<MaConfig>,
    pub areas: Vec<usize>,
    /// Row-major over `ma_list x areas`.
    pub cells: Vec<TableCell>,
}

fn evaluate_cell(field: &PortCoefficientField, ma: MaConfig, area: usize, spec: &SweepSpec) -> Result<TableCell> {
    let sub = field.centered_area(area)?;
    if !ma.fits(area, area) {
        return Ok(TableCell {
            ma,
            area,
            feasible: false,
            leftover_ports: 0,
            uniform_positions: Vec::new(),
            greedy_positions: Vec::new(),
            worst_positions: Vec::new(),
            curves: Vec::new(),
            improvement_pct: None,
            ratio_to_greedy: Vec::new(),
        });
    }
    let regions = partition_regions(area, area, ma)?;
    let p_ref = dbm_to_mw(spec.p_start_dbm);
    let uniform = select_uniform(&sub, &regions, p_ref, spec.noise_mw)?;
    let greedy = select_greedy(&sub, ma.n_t(), p_ref, spec.noise_mw)?;
    let worst = select_worst(&sub, &regions, p_ref, spec.noise_mw)?;
    let curves = [&uniform, &greedy, &worst]
        .iter()
        .map(|sel| run_power_sweep(&sub, sel, spec))
        .collect::<Result<Vec<_>>>()?;
    let se_u = selection_se(&sub, &uniform, REPORT_POWER_DBM, spec.noise_mw)?;
    let se_w = selection_se(&sub, &worst, REPORT_POWER_DBM, spec.noise_mw)?;
    let improvement_pct = (se_w > 0.0).then(|| (se_u - se_w) / se_w * 100.0);
    let ratio_to_greedy = curves[0]
        .points
        .iter()
        .zip(&curves[1].points)
        .map(|(u, g)| {
            if g.se_bits_per_hz > 0.0 {
                u.se_bits_per_hz / g.se_bits_per_hz
            } else {
                1.0
            }
        })
        .collect();
    Ok(TableCell {
        ma,
        area,
        feasible: true,
        leftover_ports: regions.leftover.len(),
        uniform_positions: uniform.positions,
        greedy_positions: greedy.positions,
        worst_positions: worst.positions,
        curves,
        improvement_pct,
        ratio_to_greedy,
    })
}

/// Uniform, greedy and worst selections for every (MA, centered area) pair,
/// evaluated on the narrowband slice at `spec.carrier_hz`.
pub fn improvement_table(
    ds: &ChannelDataset,
    ma_list: &[MaConfig],
    areas: &[usize],
    spec: &SweepSpec,
) -> Result<ExperimentReport> {
    let field = narrowband_slice(ds, spec.carrier_hz, spec.normalization)?;
    improvement_table_for_field(&field, ma_list, areas, spec)
}

/// [`improvement_table`] on an already sliced field.
pub fn improvement_table_for_field(
    field: &PortCoefficientField,
    ma_list: &[MaConfig],
    areas: &[usize],
    spec: &SweepSpec,
) -> Result<ExperimentReport> {
    spec.validate()?;
    for &area in areas {
        field.grid.centered_subgrid(area)?;
    }
    let pairs: Vec<(MaConfig, usize)> = ma_list
        .iter()
        .flat_map(|&ma| areas.iter().map(move |&a| (ma, a)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(ma, area)| evaluate_cell(field, ma, area, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        normalization: field.normalization,
        carrier_hz: spec.carrier_hz,
        noise_mw: spec.noise_mw,
        report_power_dbm: REPORT_POWER_DBM,
        powers_dbm: spec.powers_dbm(),
        ma_list: ma_list.to_vec(),
        areas: areas.to_vec(),
        cells,
    })
}

/// Flat sweep row as written to CSV and JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_dbm: f64,
    pub scheme: Scheme,
    pub se_bits_per_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    pub title: String,
    pub normalization: Normalization,
    pub power_dbm: Option<f64>,
    pub columns: Vec<String>,
    /// One row per MA; `None` marks an infeasible cell.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl TableDoc {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ma");
        for c in &self.columns {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out.push_str(label);
            for v in values {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v:.4}");
                    }
                    None => out.push_str(",/"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn sweep_rows(curves: &[SeCurve]) -> Vec<SweepRow> {
    curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| SweepRow {
                p_dbm: p.p_dbm,
                scheme: c.scheme,
                se_bits_per_hz: p.se_bits_per_hz,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p_dbm,scheme,se_bits_per_hz\n");
    for r in rows {
        let _ = writeln!(out, "{:.2},{},{:.6}", r.p_dbm, r.scheme.label(), r.se_bits_per_hz);
    }
    out
}

fn area_label(area: usize) -> String {
    format!("{area}x{area}")
}

impl ExperimentReport {
    pub fn cell(&self, ma: MaConfig, area: usize) -> Option<&TableCell> {
        self.cells.iter().find(|c| c.ma == ma && c.area == area)
    }

    fn table(&self, title: &str, power_dbm: Option<f64>, value: impl Fn(&TableCell) -> Option<f64>) -> TableDoc {
        TableDoc {
            title: title.to_string(),
            normalization: self.normalization,
            power_dbm,
            columns: self.areas.iter().map(|&a| area_label(a)).collect(),
            rows: self
                .ma_list
                .iter()
                .map(|&ma| {
                    let values = self
                        .areas
                        .iter()
                        .map(|&a| self.cell(ma, a).filter(|c| c.feasible).and_then(&value))
                        .collect();
                    (ma.label(), values)
                })
                .collect(),
        }
    }

    /// Improvement over the worst baseline, rows MA and columns area.
    pub fn improvement_doc(&self) -> TableDoc {
        self.table("improvement-pct-vs-worst", Some(self.report_power_dbm), |c| {
            c.improvement_pct
        })
    }

    /// Uniform-to-greedy SE ratio at one sweep power.
    pub fn ratio_doc(&self, p_dbm: f64) -> TableDoc {
        let k = self.powers_dbm.iter().position(|p| (p - p_dbm).abs() < 1e-9);
        self.table("ratio-to-greedy", Some(p_dbm), move |c| {
            k.and_then(|k| c.ratio_to_greedy.get(k).copied())
        })
    }

    pub fn ratio_rows(&self) -> Vec<RatioRow> {
        self.cells
            .iter()
            .filter(|c| c.feasible)
            .flat_map(|c| {
                self.powers_dbm
                    .iter()
                    .zip(&c.ratio_to_greedy)
                    .map(move |(&p_dbm, &r)| RatioRow {
                        ma: c.ma.label(),
                        area: c.area,
                        p_dbm,
                        ratio_to_greedy: r,
                    })
            })
            .collect()
    }

    /// Writes every table and sweep as CSV with a JSON mirror. Returns the
    /// paths written, in order.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |stem: &str, csv: String, json: String| -> Result<()> {
            for (ext, body) in [("csv", csv), ("json", json)] {
                let path = dir.join(format!("{stem}.{ext}"));
                write_text(&path, &body)?;
                written.push(path);
            }
            Ok(())
        };
        let table = self.improvement_doc();
        emit("table_improvement", table.to_csv(), to_json(&table)?)?;
        let ratios = self.ratio_rows();
        emit("table_ratio", ratio_csv(&ratios), to_json(&ratios)?)?;
        for cell in self.cells.iter().filter(|c| c.feasible) {
            let rows = sweep_rows(&cell.curves);
            emit(
                &format!("sweep_{}_{}", cell.ma.label(), area_label(cell.area)),
                sweep_csv(&rows),
                to_json(&rows)?,
            )?;
        }
        let path = dir.join("report.json");
        write_text(&path, &to_json(self)?)?;
        written.push(path);
        Ok(written)
    }
}

/// Uniform-to-greedy ratio of one feasible cell at one power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub ma: String,
    pub area: usize,
    pub p_dbm: f64,
    pub ratio_to_greedy: f64,
}

fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut out = String::from("ma,area,p_dbm,ratio_to_greedy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.6}",
            r.ma,
            area_label(r.area),
            r.p_dbm,
            r.ratio_to_greedy
        );
    }
    out
}

pub(crate) fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
