//! Movable-antenna position selection over the candidate port grid.
//!
//! For an `m x n` MA array the `M x N` grid is cut into `m x n` equal
//! rectangles of `floor(M/m) x floor(N/n)` ports, one per antenna. Linear
//! arrays are the `1 x n` and `m x 1` special cases, whose regions span every
//! row (resp. column). Ports past the last full rectangle are left over and
//! never selected.
//!
//! Indices are zero-based and ties always go to the smallest row-major index.

use std::ops::Range;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chanstore::PortCoefficientField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaConfig {
    /// Antenna rows (vertical).
    pub m: usize,
    /// Antenna columns (horizontal).
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaType {
    Single,
    Planar,
    LinearHorizontal,
    LinearVertical,
}

impl MaConfig {
    pub fn new(m: usize, n: usize) -> Self {
        MaConfig { m, n }
    }

    pub fn n_t(&self) -> usize {
        self.m * self.n
    }

    pub fn ma_type(&self) -> MaType {
        match (self.m, self.n) {
            (1, 1) => MaType::Single,
            (1, _) => MaType::LinearHorizontal,
            (_, 1) => MaType::LinearVertical,
            _ => MaType::Planar,
        }
    }

    pub fn fits(&self, rows: usize, cols: usize) -> bool {
        self.m >= 1 && self.n >= 1 && self.m <= rows && self.n <= cols
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.m, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Port {
    pub row: usize,
    pub col: usize,
}

impl Port {
    pub fn new(row: usize, col: usize) -> Self {
        Port { row, col }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Region {
    pub fn contains(&self, p: Port) -> bool {
        self.rows.contains(&p.row) && self.cols.contains(&p.col)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }

    /// Ports in row-major order.
    pub fn ports(&self) -> impl Iterator<Item = Port> + '_ {
        self.rows
            .clone()
            .flat_map(move |r| self.cols.clone().map(move |c| Port::new(r, c)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMap {
    pub rows: usize,
    pub cols: usize,
    pub ma: MaConfig,
    /// Row-major over the `m x n` antenna layout.
    pub regions: Vec<Region>,
    pub leftover: Vec<Port>,
}

pub fn partition_regions(rows: usize, cols: usize, ma: MaConfig) -> Result<RegionMap> {
    if !ma.fits(rows, cols) {
        return Err(Error::Configuration {
            m: ma.m,
            n: ma.n,
            rows,
            cols,
        });
    }
    let height = rows / ma.m;
    let width = cols / ma.n;
    let regions: Vec<Region> = (0..ma.m)
        .flat_map(|i| {
            (0..ma.n).map(move |j| Region {
                rows: i * height..(i + 1) * height,
                cols: j * width..(j + 1) * width,
            })
        })
        .collect();
    let leftover = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Port::new(r, c)))
        .filter(|p| p.row >= ma.m * height || p.col >= ma.n * width)
        .collect();
    Ok(RegionMap {
        rows,
        cols,
        ma,
        regions,
        leftover,
    })
}

/// Single-user SINR `p |h|^2 / sigma^2` (no interference term).
pub fn port_sinr(h: Complex64, p_mw: f64, noise_mw: f64) -> Result<f64> {
    check_powers(p_mw, noise_mw)?;
    Ok(p_mw * h.norm_sqr() / noise_mw)
}

pub(crate) fn check_powers(p_mw: f64, noise_mw: f64) -> Result<()> {
    if !(noise_mw > 0.0 && noise_mw.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise power must be positive, got {noise_mw}"
        )));
    }
    if !(p_mw >= 0.0 && p_mw.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "transmit power must be non-negative, got {p_mw}"
        )));
    }
    Ok(())
}

pub fn sinr_field(field: &PortCoefficientField, p_mw: f64, noise_mw: f64) -> Result<Array2<f64>> {
    check_powers(p_mw, noise_mw)?;
    Ok(field.h.mapv(|h| p_mw * h.norm_sqr() / noise_mw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    UniformRegion,
    Greedy,
    WorstRegion,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::UniformRegion => "uniform-region",
            Scheme::Greedy => "greedy",
            Scheme::WorstRegion => "worst-region",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub scheme: Scheme,
    pub positions: Vec<Port>,
    pub sinr_field: Array2<f64>,
}

impl SelectionResult {
    pub fn sinr_at_positions(&self) -> Vec<f64> {
        self.positions.iter().map(|p| self.sinr_field[[p.row, p.col]]).collect()
    }

    /// Channel vector of the selected ports, in selection order.
    pub fn channel(&self, field: &PortCoefficientField) -> Result<Vec<Complex64>> {
        self.positions
            .iter()
            .map(|p| {
                field
                    .h
                    .get([p.row, p.col])
                    .copied()
                    .ok_or_else(|| Error::InvalidParameter(format!("port ({}, {}) outside the field", p.row, p.col)))
            })
            .collect()
    }

    pub fn to_doc(&self) -> SelectionDoc {
        SelectionDoc {
            scheme: self.scheme,
            positions: self.positions.clone(),
            sinr: self.sinr_at_positions(),
        }
    }
}

/// JSON export form of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDoc {
    pub scheme: Scheme,
    pub positions: Vec<Port>,
    pub sinr: Vec<f64>,
}

fn check_regions(field: &PortCoefficientField, regions: &RegionMap) -> Result<()> {
    if (regions.rows, regions.cols) != (field.grid.rows, field.grid.cols) {
        return Err(Error::Shape(format!(
            "regions cover {}x{}, field is {}x{}",
            regions.rows, regions.cols, field.grid.rows, field.grid.cols
        )));
    }
    if let Some(index) = regions.regions.iter().position(Region::is_empty) {
        return Err(Error::EmptyRegion { index });
    }
    Ok(())
}

fn select_per_region(
    field: &PortCoefficientField,
    regions: &RegionMap,
    p_mw: f64,
    noise_mw: f64,
    scheme: Scheme,
) -> Result<SelectionResult> {
    check_regions(field, regions)?;
    let sinr = sinr_field(field, p_mw, noise_mw)?;
    let better = |a: f64, b: f64| match scheme {
        Scheme::WorstRegion => a < b,
        _ => a > b,
    };
    let positions = regions
        .regions
        .iter()
        .map(|region| {
            let mut ports = region.ports();
            let first = ports.next().expect("non-empty region");
            ports.fold(first, |best, p| {
                if better(sinr[[p.row, p.col]], sinr[[best.row, best.col]]) {
                    p
                } else {
                    best
                }
            })
        })
        .collect();
    Ok(SelectionResult {
        scheme,
        positions,
        sinr_field: sinr,
    })
}

/// The SINR-maximizing port of each region.
pub fn select_uniform(
    field: &PortCoefficientField,
    regions: &RegionMap,
    p_mw: f64,
    noise_mw: f64,
) -> Result<SelectionResult> {
    select_per_region(field, regions, p_mw, noise_mw, Scheme::UniformRegion)
}

/// The SINR-minimizing port of each region.
pub fn select_worst(
    field: &PortCoefficientField,
    regions: &RegionMap,
    p_mw: f64,
    noise_mw: f64,
) -> Result<SelectionResult> {
    select_per_region(field, regions, p_mw, noise_mw, Scheme::WorstRegion)
}

/// The `n_t` best ports of the whole grid, best first.
pub fn select_greedy(field: &PortCoefficientField, n_t: usize, p_mw: f64, noise_mw: f64) -> Result<SelectionResult> {
    let (rows, cols) = (field.grid.rows, field.grid.cols);
    if n_t == 0 || n_t > rows * cols {
        return Err(Error::InvalidParameter(format!(
            "cannot pick {n_t} ports out of {}",
            rows * cols
        )));
    }
    let sinr = sinr_field(field, p_mw, noise_mw)?;
    let mut order: Vec<usize> = (0..rows * cols).collect();
    // Stable sort keeps row-major order among equal SINRs.
    order.sort_by(|&a, &b| sinr[[b / cols, b % cols]].total_cmp(&sinr[[a / cols, a % cols]]));
    let positions = order[..n_t].iter().map(|&i| Port::new(i / cols, i % cols)).collect();
    Ok(SelectionResult {
        scheme: Scheme::Greedy,
        positions,
        sinr_field: sinr,
    })
}
