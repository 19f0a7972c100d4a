//! Subcommand implementations. Each command writes its artifacts plus a
//! `provenance_<command>.json` into the output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ma_chansim::beamsweep::{dbm_to_mw, improvement_table};
use ma_chansim::chanstore::{narrowband_slice, read_dataset, write_dataset, ChannelDataset};
use ma_chansim::portselect::{
    partition_regions, select_greedy, select_uniform, select_worst, MaConfig, Port, Scheme, SelectionDoc,
    SelectionResult,
};
use ma_chansim::rayextract::{extract_all_ports, ray_map_from, ExtractOptions, RayMap, Window};
use ma_chansim::spatialcov::{
    complex_cov, cov_model_fit, factorize, frobenius, gen_complex, gen_magnitudes, magnitude_cov, reconstruct,
    sample_covariance, ComplexCovariance, CovarianceDoc, MagnitudeCovariance, PeriodicFit, RowSamples, YSource,
    SINGLE_SHIFT_WAVELENGTHS,
};
use ma_chansim::tworay::{synth_ctf, RayKind, TwoRayModel, SPEED_OF_LIGHT};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, YSourceKind};
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.bin";
pub const COV_COMPLEX_FILE: &str = "cov_complex.json";
pub const COV_MAGNITUDE_FILE: &str = "cov_magnitude.json";

type Result<T> = std::result::Result<T, CliError>;

/// Resolved settings shared by every command.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Context { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn dataset_path(&self, given: Option<&Path>) -> PathBuf {
        given.map(Path::to_path_buf).unwrap_or_else(|| self.path(DATASET_FILE))
    }

    /// `path` relative to the output directory when it lies inside it.
    fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.out).unwrap_or(path).display().to_string()
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    inputs: Vec<String>,
    /// File names relative to the output directory.
    outputs: Vec<String>,
    derived: BTreeMap<String, serde_json::Value>,
    notes: Vec<String>,
}

/// Artifacts written by one command.
#[derive(Default)]
struct Record {
    inputs: Vec<String>,
    outputs: Vec<String>,
    derived: BTreeMap<String, serde_json::Value>,
    notes: Vec<String>,
}

impl Record {
    fn derive(&mut self, key: &str, value: impl Serialize) {
        self.derived
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or_default());
    }

    fn finish(mut self, ctx: &Context, command: &str) -> Result<Vec<String>> {
        let name = format!("provenance_{command}.json");
        let doc = Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: &ctx.cfg,
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            derived: std::mem::take(&mut self.derived),
            notes: self.notes.clone(),
        };
        write_json(&ctx.path(&name), &doc)?;
        self.outputs.push(name);
        Ok(self.outputs)
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialize {}: {e}", path.display())))?;
    body.push('\n');
    write_text(path, &body)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_dataset(ctx: &Context, path: &Path, record: &mut Record) -> Result<ChannelDataset> {
    record.inputs.push(ctx.display(path));
    Ok(read_dataset(path)?)
}

pub fn synth(ctx: &Context) -> Result<Vec<String>> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid.port_grid()?;
    let model = TwoRayModel::new(&grid, cfg.geometry, cfg.calibration).map_err(CliError::config)?;
    let ds = synth_ctf(&grid, &cfg.frequency, cfg.geometry, cfg.calibration)?;
    write_dataset(&ds, ctx.path(DATASET_FILE))?;
    let mut rec = Record::default();
    rec.outputs.push(DATASET_FILE.into());
    let paths = model.center_paths();
    rec.derive("height_scale", cfg.geometry.height_scale());
    rec.derive("center_los_path_m", paths.los_m);
    rec.derive("center_reflected_path_m", paths.reflected_m);
    rec.derive("center_los_delay_ns", paths.los_m / SPEED_OF_LIGHT * 1e9);
    rec.derive("center_reflected_delay_ns", paths.reflected_m / SPEED_OF_LIGHT * 1e9);
    rec.derive(
        "delay_bin_ps",
        1e12 / (cfg.frequency.n_points as f64 * cfg.frequency.step_hz()),
    );
    rec.derive("payload_bytes", ds.payload_len());
    rec.finish(ctx, "synth")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindSelection {
    All,
    Los,
    Reflected,
}

#[derive(Serialize)]
struct RaySummary {
    delay_ns: f64,
    gain_db: f64,
    phase_rad: f64,
}

fn ray_summary(map: &RayMap, r: usize, c: usize) -> Option<RaySummary> {
    (!map.missing[[r, c]]).then(|| RaySummary {
        delay_ns: map.delay_s[[r, c]] * 1e9,
        gain_db: map.gain_db[[r, c]],
        phase_rad: map.phase_rad[[r, c]],
    })
}

pub fn extract(ctx: &Context, dataset: Option<&Path>, kinds: KindSelection, window: Window) -> Result<Vec<String>> {
    let mut rec = Record::default();
    let ds = load_dataset(ctx, &ctx.dataset_path(dataset), &mut rec)?;
    let opts = ExtractOptions::default();
    let extractions = extract_all_ports(&ds, window, &opts)?;
    let incomplete = extractions.iter().filter(|e| e.incomplete).count();
    if incomplete > 0 {
        log::warn!("{incomplete} ports resolved fewer than {} rays", opts.k);
    }
    let wanted: &[(RayKind, &str)] = match kinds {
        KindSelection::All => &[(RayKind::Los, "los"), (RayKind::Reflected, "reflected")],
        KindSelection::Los => &[(RayKind::Los, "los")],
        KindSelection::Reflected => &[(RayKind::Reflected, "reflected")],
    };
    let (cr, cc) = (ds.grid.center_row, ds.grid.center_col);
    let mut center = BTreeMap::new();
    let mut missing = BTreeMap::new();
    for &(kind, name) in wanted {
        let map = ray_map_from(&ds.grid, &extractions, kind);
        let file = format!("raymap_{name}.csv");
        map.write_csv(ctx.path(&file))?;
        rec.outputs.push(file);
        center.insert(name, ray_summary(&map, cr, cc));
        missing.insert(name, map.missing_count());
    }
    let summary = serde_json::json!({
        "ports": extractions.len(),
        "incomplete_ports": incomplete,
        "missing": missing,
        "center_port": [cr, cc],
        "center": center,
        "window": format!("{window:?}").to_lowercase(),
        "options": opts,
    });
    write_json(&ctx.path("extract_summary.json"), &summary)?;
    rec.outputs.push("extract_summary.json".into());
    rec.finish(ctx, "extract")
}

/// JSON form of a magnitude covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnitudeDoc {
    pub n: usize,
    pub mean: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl From<&MagnitudeCovariance> for MagnitudeDoc {
    fn from(m: &MagnitudeCovariance) -> Self {
        MagnitudeDoc {
            n: m.dim(),
            mean: m.mean.to_vec(),
            sigma: m.sigma.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl MagnitudeDoc {
    fn to_model(&self) -> Result<MagnitudeCovariance> {
        let n = self.n;
        if self.mean.len() != n || self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != n) {
            return Err(CliError::Config(format!(
                "magnitude covariance document is not {n}x{n}"
            )));
        }
        Ok(MagnitudeCovariance {
            sigma: Array2::from_shape_fn((n, n), |(i, j)| self.sigma[i][j]),
            mean: Array1::from(self.mean.clone()),
        })
    }
}

fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn narrowband_rows(ctx: &Context, ds: &ChannelDataset) -> Result<(RowSamples, usize)> {
    let cov = &ctx.cfg.covariance;
    let field = narrowband_slice(ds, cov.carrier_hz, cov.normalization)?;
    let bin = ds.freq.nearest_index(cov.carrier_hz)?;
    Ok((RowSamples::from_field_horizontal(&field)?, bin))
}

pub fn cov(ctx: &Context, dataset: Option<&Path>, fit: bool) -> Result<Vec<String>> {
    let mut rec = Record::default();
    let ds = load_dataset(ctx, &ctx.dataset_path(dataset), &mut rec)?;
    let (rows, bin) = narrowband_rows(ctx, &ds)?;
    let complex = complex_cov(&rows)?;
    let magnitude = magnitude_cov(&rows)?;

    write_json(&ctx.path(COV_COMPLEX_FILE), &CovarianceDoc::from(&complex))?;
    write_text(
        &ctx.path("cov_complex_re.csv"),
        &matrix_csv(&complex.sigma.mapv(|v| v.re)),
    )?;
    write_text(
        &ctx.path("cov_complex_im.csv"),
        &matrix_csv(&complex.sigma.mapv(|v| v.im)),
    )?;
    write_json(&ctx.path(COV_MAGNITUDE_FILE), &MagnitudeDoc::from(&magnitude))?;
    write_text(&ctx.path("cov_magnitude.csv"), &matrix_csv(&magnitude.sigma))?;
    for f in [
        COV_COMPLEX_FILE,
        "cov_complex_re.csv",
        "cov_complex_im.csv",
        COV_MAGNITUDE_FILE,
        "cov_magnitude.csv",
    ] {
        rec.outputs.push(f.into());
    }

    let factor = factorize(&complex.sigma)?;
    let scale = frobenius(&complex.sigma);
    let residual = frobenius(&(&complex.sigma - &reconstruct(&factor.c)));
    rec.derive("frequency_bin", bin);
    rec.derive("frequency_hz", ds.freq.frequency(bin));
    rec.derive("variables", rows.n_rows());
    rec.derive("samples_per_variable", rows.n_samples());
    rec.derive("factor_kind", factor.kind);
    rec.derive("clamped_pivots", factor.clamped);
    rec.derive(
        "reconstruction_rel_error",
        if scale > 0.0 { residual / scale } else { residual },
    );

    if fit || ctx.cfg.covariance.fit {
        let spacing = ds.grid.spacing_m;
        let wavelength = ctx.cfg.covariance.wavelength_m;
        let period = (SINGLE_SHIFT_WAVELENGTHS * wavelength / spacing).round() as usize;
        let used = magnitude.dim().min(period.max(6));
        let sequence: Vec<f64> = (0..used).map(|j| magnitude.sigma[[0, j]]).collect();
        let result: PeriodicFit = cov_model_fit(&sequence, wavelength, spacing)?;
        let doc = serde_json::json!({
            "points_used": used,
            "sequence": sequence,
            "params": result.params,
            "residual_norm": result.residual_norm,
            "relative_residual": result.relative_residual,
        });
        write_json(&ctx.path("cov_fit.json"), &doc)?;
        rec.outputs.push("cov_fit.json".into());
    }
    rec.finish(ctx, "cov")
}

pub fn genchan(
    ctx: &Context,
    cov_path: Option<&Path>,
    magnitude: bool,
    count: Option<usize>,
    dataset: Option<&Path>,
) -> Result<Vec<String>> {
    let mut rec = Record::default();
    let cfg = &ctx.cfg;
    let count = count.unwrap_or(cfg.covariance.count);
    if count == 0 {
        return Err(CliError::Config("sample count must be positive".into()));
    }
    let default_name = if magnitude {
        COV_MAGNITUDE_FILE
    } else {
        COV_COMPLEX_FILE
    };
    let path = cov_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.path(default_name));
    rec.inputs.push(ctx.display(&path));
    rec.derive("count", count);

    if magnitude {
        let model = read_json::<MagnitudeDoc>(&path)?.to_model()?;
        let g = gen_magnitudes(&model, count, cfg.seed)?;
        if g.negative_count > 0 {
            log::warn!("{} generated magnitudes are negative", g.negative_count);
        }
        let mut out = String::from("sample,index,value\n");
        for (k, col) in g.samples.columns().into_iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                let _ = writeln!(out, "{k},{i},{v:e}");
            }
        }
        write_text(&ctx.path("genchan_magnitudes.csv"), &out)?;
        rec.outputs.push("genchan_magnitudes.csv".into());
        rec.derive("negative_count", g.negative_count);
        return rec.finish(ctx, "genchan");
    }

    let doc: CovarianceDoc = read_json(&path)?;
    let model = ComplexCovariance::try_from(&doc)?;
    let source = match cfg.covariance.y_source {
        YSourceKind::CircularUniformPhase => YSource::CircularUniformPhase,
        YSourceKind::EmpiricalRows => {
            let ds = load_dataset(ctx, &ctx.dataset_path(dataset), &mut rec)?;
            YSource::EmpiricalRows(narrowband_rows(ctx, &ds)?.0)
        }
    };
    let samples = gen_complex(&model, &source, count, cfg.seed)?;
    let mut out = String::from("sample,index,re,im\n");
    for (k, col) in samples.columns().into_iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            let _ = writeln!(out, "{k},{i},{:e},{:e}", v.re, v.im);
        }
    }
    write_text(&ctx.path("genchan_samples.csv"), &out)?;
    rec.outputs.push("genchan_samples.csv".into());
    if count >= 2 {
        let check = sample_covariance(&samples)?;
        let scale = frobenius(&model.sigma);
        let err = frobenius(&(&check.sigma - &model.sigma));
        rec.derive("sample_cov_rel_error", if scale > 0.0 { err / scale } else { err });
    }
    rec.finish(ctx, "genchan")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeSelection {
    All,
    One(Scheme),
}

#[derive(Serialize)]
struct SelectionFile {
    ma: MaConfig,
    area: usize,
    /// Full-grid index of the area's `(0, 0)` port.
    origin: Port,
    p_dbm: f64,
    leftover_ports: usize,
    #[serde(flatten)]
    selection: SelectionDoc,
}

pub fn select(
    ctx: &Context,
    dataset: Option<&Path>,
    ma: Option<MaConfig>,
    area: Option<usize>,
    schemes: SchemeSelection,
) -> Result<Vec<String>> {
    let mut rec = Record::default();
    let ds = load_dataset(ctx, &ctx.dataset_path(dataset), &mut rec)?;
    let sweep = &ctx.cfg.sweep;
    let ma = ma.unwrap_or(ctx.cfg.selection.ma);
    let area = area.unwrap_or(ctx.cfg.selection.area);
    let field = narrowband_slice(&ds, sweep.carrier_hz, sweep.normalization)?;
    let (r0, c0, _) = field.grid.centered_subgrid(area).map_err(CliError::config)?;
    let sub = field.centered_area(area)?;
    let regions = partition_regions(area, area, ma).map_err(CliError::config)?;
    if !regions.leftover.is_empty() {
        log::warn!(
            "{} of {} ports in the {area}x{area} area belong to no region for a {} MA",
            regions.leftover.len(),
            area * area,
            ma.label()
        );
    }
    let p_mw = dbm_to_mw(sweep.p_start_dbm);
    let chosen: Vec<Scheme> = match schemes {
        SchemeSelection::All => vec![Scheme::UniformRegion, Scheme::Greedy, Scheme::WorstRegion],
        SchemeSelection::One(s) => vec![s],
    };
    for scheme in chosen {
        let result: SelectionResult = match scheme {
            Scheme::UniformRegion => select_uniform(&sub, &regions, p_mw, sweep.noise_mw)?,
            Scheme::Greedy => select_greedy(&sub, ma.n_t(), p_mw, sweep.noise_mw)?,
            Scheme::WorstRegion => select_worst(&sub, &regions, p_mw, sweep.noise_mw)?,
        };
        let file = format!("selection_{}.json", scheme.label());
        write_json(
            &ctx.path(&file),
            &SelectionFile {
                ma,
                area,
                origin: Port::new(r0, c0),
                p_dbm: sweep.p_start_dbm,
                leftover_ports: regions.leftover.len(),
                selection: result.to_doc(),
            },
        )?;
        rec.outputs.push(file);
    }
    rec.derive("normalization", field.normalization);
    rec.finish(ctx, "select")
}

pub fn evaluate(ctx: &Context, dataset: Option<&Path>) -> Result<Vec<String>> {
    let mut rec = Record::default();
    let ds = load_dataset(ctx, &ctx.dataset_path(dataset), &mut rec)?;
    let sel = &ctx.cfg.selection;
    let report = improvement_table(&ds, &sel.ma_list, &sel.areas, &ctx.cfg.sweep).map_err(|e| match e {
        ma_chansim::Error::Shape(_) => CliError::config(e),
        other => other.into(),
    })?;
    for cell in report.cells.iter().filter(|c| c.leftover_ports > 0) {
        log::warn!(
            "{} MA in {}x{}: {} ports belong to no region",
            cell.ma.label(),
            cell.area,
            cell.area,
            cell.leftover_ports
        );
    }
    let written = report.write_artifacts(&ctx.out)?;
    rec.outputs.extend(
        written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())),
    );
    rec.derive("normalization", report.normalization);
    rec.notes.push(format!(
        "channels normalized as {} before SE evaluation",
        report.normalization
    ));
    rec.notes
        .push("improvement is quoted against the per-region worst placement".into());
    rec.finish(ctx, "evaluate")
}

/// Every stage in sequence on a freshly synthesized dataset.
pub fn report(ctx: &Context) -> Result<Vec<String>> {
    let mut outputs = synth(ctx)?;
    let dataset = ctx.path(DATASET_FILE);
    outputs.extend(extract(ctx, Some(&dataset), KindSelection::All, Window::None)?);
    outputs.extend(cov(ctx, Some(&dataset), true)?);
    outputs.extend(genchan(ctx, None, false, None, Some(&dataset))?);
    outputs.extend(select(ctx, Some(&dataset), None, None, SchemeSelection::All)?);
    outputs.extend(evaluate(ctx, Some(&dataset))?);
    let mut rec = Record {
        outputs,
        ..Record::default()
    };
    rec.derive("stages", ["synth", "extract", "cov", "genchan", "select", "evaluate"]);
    rec.finish(ctx, "report")
}
