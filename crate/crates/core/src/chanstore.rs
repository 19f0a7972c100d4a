//! Port grids, wideband channel datasets and their on-disk format.
//!
//! A dataset file is a single line of UTF-8 JSON (the header) terminated by
//! `\n`, followed by the transfer-function tensor as little-endian `f64`
//! pairs `(re, im)` in row-major `[row][col][freq]` order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const LAYOUT: &str = "row-major-real-imag-le-f64";

/// Geometry of the `rows x cols` candidate port lattice.
///
/// Columns run along the horizontal `x` axis and rows along the vertical `z`
/// axis. The center indices are zero-based and name the port aligned with the
/// receiver boresight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortGrid {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub center_row: usize,
    pub center_col: usize,
}

impl PortGrid {
    /// Grid with the receiver aligned to port `(rows / 2, cols / 2)`.
    pub fn new(rows: usize, cols: usize, spacing_m: f64) -> Result<Self> {
        Self::with_center(rows, cols, spacing_m, rows / 2, cols / 2)
    }

    pub fn with_center(rows: usize, cols: usize, spacing_m: f64, center_row: usize, center_col: usize) -> Result<Self> {
        let grid = PortGrid {
            rows,
            cols,
            spacing_m,
            center_row,
            center_col,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "port grid must be non-empty, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing_m > 0.0 && self.spacing_m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "port spacing must be positive, got {}",
                self.spacing_m
            )));
        }
        if self.center_row >= self.rows || self.center_col >= self.cols {
            return Err(Error::InvalidParameter(format!(
                "center port ({}, {}) outside {}x{} grid",
                self.center_row, self.center_col, self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Horizontal displacement of a column from the center port, in meters.
    pub fn dx(&self, col: usize) -> f64 {
        (col as f64 - self.center_col as f64) * self.spacing_m
    }

    /// Vertical displacement of a row from the center port, in meters.
    pub fn dz(&self, row: usize) -> f64 {
        (row as f64 - self.center_row as f64) * self.spacing_m
    }

    /// The `size x size` block of ports around the center, as `(first_row, first_col)`
    /// in this grid plus the sub-grid with its own center.
    pub fn centered_subgrid(&self, size: usize) -> Result<(usize, usize, PortGrid)> {
        if size == 0 || size > self.rows || size > self.cols {
            return Err(Error::InvalidParameter(format!(
                "{size}x{size} area does not fit a {}x{} grid",
                self.rows, self.cols
            )));
        }
        let first_row = self.center_row.saturating_sub(size / 2).min(self.rows - size);
        let first_col = self.center_col.saturating_sub(size / 2).min(self.cols - size);
        let sub = PortGrid {
            rows: size,
            cols: size,
            spacing_m: self.spacing_m,
            center_row: self.center_row - first_row,
            center_col: self.center_col - first_col,
        };
        sub.validate()?;
        Ok((first_row, first_col, sub))
    }
}

/// Uniform frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyGrid {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_points: usize,
}

/// The 260-320 GHz, 1001-point chamber sweep.
impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            f_start_hz: 260e9,
            f_stop_hz: 320e9,
            n_points: 1001,
        }
    }
}

impl FrequencyGrid {
    pub fn new(f_start_hz: f64, f_stop_hz: f64, n_points: usize) -> Result<Self> {
        let freq = FrequencyGrid {
            f_start_hz,
            f_stop_hz,
            n_points,
        };
        freq.validate()?;
        Ok(freq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_start_hz.is_finite() && self.f_stop_hz.is_finite()) || self.f_stop_hz <= self.f_start_hz {
            return Err(Error::InvalidParameter(format!(
                "frequency band [{}, {}] is empty",
                self.f_start_hz, self.f_stop_hz
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "frequency grid needs at least 2 points, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn step_hz(&self) -> f64 {
        (self.f_stop_hz - self.f_start_hz) / (self.n_points - 1) as f64
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.f_start_hz + index as f64 * self.step_hz()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.f_stop_hz - self.f_start_hz
    }

    pub fn center_hz(&self) -> f64 {
        0.5 * (self.f_start_hz + self.f_stop_hz)
    }

    /// Index of the sample nearest `f_hz`; ties go to the lower index.
    pub fn nearest_index(&self, f_hz: f64) -> Result<usize> {
        if !(f_hz >= self.f_start_hz && f_hz <= self.f_stop_hz) {
            return Err(Error::CarrierOutOfBand {
                carrier_hz: f_hz,
                start_hz: self.f_start_hz,
                stop_hz: self.f_stop_hz,
            });
        }
        let pos = (f_hz - self.f_start_hz) / self.step_hz();
        let lower = pos.floor();
        let index = if pos - lower > 0.5 { lower + 1.0 } else { lower };
        Ok((index as usize).min(self.n_points - 1))
    }
}

/// Per-port channel transfer functions over a frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub grid: PortGrid,
    pub freq: FrequencyGrid,
    /// Indexed `[row, col, freq_index]`.
    pub ctf: Array3<Complex64>,
    pub label: String,
}

impl ChannelDataset {
    pub fn new(grid: PortGrid, freq: FrequencyGrid, ctf: Array3<Complex64>, label: impl Into<String>) -> Result<Self> {
        grid.validate()?;
        freq.validate()?;
        let expected = (grid.rows, grid.cols, freq.n_points);
        if ctf.dim() != expected {
            return Err(Error::Shape(format!(
                "tensor is {:?}, grid and sweep require {:?}",
                ctf.dim(),
                expected
            )));
        }
        if ctf.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidParameter(
                "transfer function contains non-finite entries".into(),
            ));
        }
        Ok(ChannelDataset {
            grid,
            freq,
            ctf,
            label: label.into(),
        })
    }

    pub fn payload_len(&self) -> usize {
        self.ctf.len() * 16
    }

    /// Transfer function of one port over the sweep.
    pub fn port_ctf(&self, row: usize, col: usize) -> Vec<Complex64> {
        self.ctf.slice(s![row, col, ..]).to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    #[default]
    UnitMeanPower,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::Raw => "raw",
            Normalization::UnitMeanPower => "unit-mean-power",
        })
    }
}

/// Narrowband channel coefficient at every port.
#[derive(Debug, Clone, PartialEq)]
pub struct PortCoefficientField {
    pub grid: PortGrid,
    /// Indexed `[row, col]`.
    pub h: Array2<Complex64>,
    pub normalization: Normalization,
}

impl PortCoefficientField {
    pub fn new(grid: PortGrid, h: Array2<Complex64>, normalization: Normalization) -> Result<Self> {
        grid.validate()?;
        if h.dim() != (grid.rows, grid.cols) {
            return Err(Error::Shape(format!(
                "field is {:?}, grid is {}x{}",
                h.dim(),
                grid.rows,
                grid.cols
            )));
        }
        let mut field = PortCoefficientField {
            grid,
            h,
            normalization: Normalization::Raw,
        };
        if normalization == Normalization::UnitMeanPower {
            field.normalize_unit_mean_power()?;
        }
        Ok(field)
    }

    pub fn mean_power(&self) -> f64 {
        self.h.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.h.len() as f64
    }

    fn normalize_unit_mean_power(&mut self) -> Result<()> {
        let power = self.mean_power();
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::InvalidParameter("cannot normalize an all-zero field".into()));
        }
        let scale = power.sqrt().recip();
        self.h.mapv_inplace(|v| v * scale);
        self.normalization = Normalization::UnitMeanPower;
        Ok(())
    }

    /// The centered `size x size` block. Coefficients are copied unchanged, so
    /// the block keeps the scale of the full grid.
    pub fn centered_area(&self, size: usize) -> Result<PortCoefficientField> {
        let (r0, c0, grid) = self.grid.centered_subgrid(size)?;
        Ok(PortCoefficientField {
            grid,
            h: self.h.slice(s![r0..r0 + size, c0..c0 + size]).to_owned(),
            normalization: self.normalization,
        })
    }
}

/// Per-port coefficient at the sweep sample nearest `f_carrier_hz`.
pub fn narrowband_slice(
    ds: &ChannelDataset,
    f_carrier_hz: f64,
    normalization: Normalization,
) -> Result<PortCoefficientField> {
    let k = ds.freq.nearest_index(f_carrier_hz)?;
    let h = ds.ctf.slice(s![.., .., k]).to_owned();
    PortCoefficientField::new(ds.grid, h, normalization)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    rows: usize,
    cols: usize,
    spacing_m: f64,
    center_row: usize,
    center_col: usize,
    f_start_hz: f64,
    f_stop_hz: f64,
    n_points: usize,
    endianness: String,
    layout: String,
    label: String,
}

pub fn write_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        schema_version: SCHEMA_VERSION,
        rows: ds.grid.rows,
        cols: ds.grid.cols,
        spacing_m: ds.grid.spacing_m,
        center_row: ds.grid.center_row,
        center_col: ds.grid.center_col,
        f_start_hz: ds.freq.f_start_hz,
        f_stop_hz: ds.freq.f_stop_hz,
        n_points: ds.freq.n_points,
        endianness: "little".into(),
        layout: LAYOUT.into(),
        label: ds.label.clone(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        // Standard layout iteration order is row-major [row][col][freq].
        for v in ds.ctf.iter() {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| malformed("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline]).map_err(|e| malformed(e.to_string()))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(malformed(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    if header.layout != LAYOUT || header.endianness != "little" {
        return Err(malformed(format!(
            "unsupported layout {} ({})",
            header.layout, header.endianness
        )));
    }
    let grid = PortGrid {
        rows: header.rows,
        cols: header.cols,
        spacing_m: header.spacing_m,
        center_row: header.center_row,
        center_col: header.center_col,
    };
    let freq = FrequencyGrid {
        f_start_hz: header.f_start_hz,
        f_stop_hz: header.f_stop_hz,
        n_points: header.n_points,
    };
    grid.validate().map_err(|e| malformed(e.to_string()))?;
    freq.validate().map_err(|e| malformed(e.to_string()))?;

    let payload = &bytes[newline + 1..];
    let expected = grid
        .rows
        .checked_mul(grid.cols)
        .and_then(|n| n.checked_mul(freq.n_points))
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| malformed("dimensions overflow".into()))?;
    if payload.len() % 16 != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() != expected {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }

    let values: Vec<Complex64> = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let ctf = Array3::from_shape_vec((grid.rows, grid.cols, freq.n_points), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    ChannelDataset::new(grid, freq, ctf, header.label)
}
