//! Run configuration document. Every field is optional; missing fields take
//! the chamber-measurement defaults.

use std::path::{Path, PathBuf};

use ma_chansim::beamsweep::SweepSpec;
use ma_chansim::chanstore::{FrequencyGrid, Normalization, PortGrid};
use ma_chansim::portselect::MaConfig;
use ma_chansim::tworay::{RayCalibration, TwoRayGeometry};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    /// Defaults to `rows / 2`.
    pub center_row: Option<usize>,
    /// Defaults to `cols / 2`.
    pub center_col: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            rows: 32,
            cols: 32,
            spacing_m: 1e-3,
            center_row: None,
            center_col: None,
        }
    }
}

impl GridConfig {
    pub fn port_grid(&self) -> Result<PortGrid, CliError> {
        PortGrid::with_center(
            self.rows,
            self.cols,
            self.spacing_m,
            self.center_row.unwrap_or(self.rows / 2),
            self.center_col.unwrap_or(self.cols / 2),
        )
        .map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum YSourceKind {
    #[default]
    CircularUniformPhase,
    /// Normalized rows of the dataset's own narrowband slice.
    EmpiricalRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceConfig {
    /// Frequency of the narrowband slice the covariance is estimated from.
    pub carrier_hz: f64,
    pub normalization: Normalization,
    /// Wavelength used by the periodic model fit.
    pub wavelength_m: f64,
    /// Samples produced by `genchan`.
    pub count: usize,
    pub y_source: YSourceKind,
    /// Fit the periodic model to the first magnitude-covariance row.
    pub fit: bool,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        CovarianceConfig {
            carrier_hz: 300e9,
            normalization: Normalization::Raw,
            wavelength_m: 1e-3,
            count: 10_000,
            y_source: YSourceKind::CircularUniformPhase,
            fit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// MA shape used by `select`.
    pub ma: MaConfig,
    /// Centered area used by `select`.
    pub area: usize,
    /// Table rows for `evaluate`.
    pub ma_list: Vec<MaConfig>,
    /// Table columns for `evaluate`.
    pub areas: Vec<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            ma: MaConfig::new(4, 1),
            area: 32,
            ma_list: [2, 4, 8, 16].iter().map(|&m| MaConfig::new(m, 1)).collect(),
            areas: vec![32, 16, 8, 4, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: TwoRayGeometry,
    pub calibration: RayCalibration,
    pub grid: GridConfig,
    pub frequency: FrequencyGrid,
    pub covariance: CovarianceConfig,
    pub selection: SelectionConfig,
    pub sweep: SweepSpec,
    #[serde(alias = "output-dir")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate().map_err(CliError::config)?;
        self.calibration.validate().map_err(CliError::config)?;
        self.grid.port_grid()?;
        self.frequency.validate().map_err(CliError::config)?;
        self.sweep.validate().map_err(CliError::config)?;
        if self.covariance.wavelength_m.is_nan() || self.covariance.wavelength_m <= 0.0 {
            return Err(CliError::Config("covariance.wavelength_m must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let grid = cfg.grid.port_grid().unwrap();
        assert_eq!(
            (grid.rows, grid.cols, grid.center_row, grid.center_col),
            (32, 32, 16, 16)
        );
        assert_eq!(cfg.frequency.n_points, 1001);
        assert_eq!(cfg.sweep.noise_mw, 4.89e-6);
        assert_eq!(cfg.geometry.d0_m, 0.86);
        assert_eq!(cfg.calibration.g_los_center_db, -79.6);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json(r#"{"grid": {"rows": 4, "colz": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("colz"));
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_json(r#"{"bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn partial_sections_and_alias() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"rows": 1, "cols": 1}, "output-dir": "x", "selection": {"ma": {"m": 1, "n": 1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.grid.spacing_m, 1e-3);
        assert_eq!(cfg.output_dir, Some(PathBuf::from("x")));
        assert_eq!(cfg.selection.ma, MaConfig::new(1, 1));
        assert!(cfg.validate().is_ok());
    }
}
