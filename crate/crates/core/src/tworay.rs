//! Deterministic two-ray (LoS + single specular reflection) channel synthesis.
//!
//! The reflecting metal wall is treated as the "ground" of the classic two-ray
//! model: the horizontal port offset `dx` raises the transmitter "height" and
//! the vertical offset `dz` lengthens the "horizontal" separation.
//!
//! Ray magnitudes are anchored to the measured center-port gains and are flat
//! over frequency; each ray's phase is `-2 pi f L / c`, so the delay is carried
//! entirely by the phase slope across the sweep.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanstore::{ChannelDataset, FrequencyGrid, PortGrid};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reflected path length measured at the center port.
pub const MEASURED_REFLECTED_PATH_M: f64 = 1.0639;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeightMode {
    /// Heights exactly as stated for the chamber (0.324 m each).
    AsStated,
    /// Heights scaled so the center reflected path is 1.0639 m.
    #[default]
    MatchMeasured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoRayGeometry {
    /// Tx-Rx boresight separation.
    pub d0_m: f64,
    /// Receiver distance from the reflecting surface.
    pub h_r_m: f64,
    /// Transmitter distance from the reflecting surface at `dx = 0`.
    pub h_t_offset_m: f64,
    pub height_mode: HeightMode,
}

impl Default for TwoRayGeometry {
    fn default() -> Self {
        TwoRayGeometry {
            d0_m: 0.86,
            h_r_m: 0.324,
            h_t_offset_m: 0.324,
            height_mode: HeightMode::MatchMeasured,
        }
    }
}

impl TwoRayGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0_m > 0.0 && self.h_r_m > 0.0 && self.h_t_offset_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "two-ray geometry needs positive d0, h_r, h_t offset; got {}, {}, {}",
                self.d0_m, self.h_r_m, self.h_t_offset_m
            )));
        }
        if self.height_mode == HeightMode::MatchMeasured && MEASURED_REFLECTED_PATH_M <= self.d0_m {
            return Err(Error::InvalidParameter(format!(
                "d0 = {} m leaves no room for a {} m reflected path",
                self.d0_m, MEASURED_REFLECTED_PATH_M
            )));
        }
        Ok(())
    }

    /// Factor applied to `h_t + h_r` before computing the reflected path.
    pub fn height_scale(&self) -> f64 {
        match self.height_mode {
            HeightMode::AsStated => 1.0,
            HeightMode::MatchMeasured => {
                let target = (MEASURED_REFLECTED_PATH_M.powi(2) - self.d0_m.powi(2)).sqrt();
                target / (self.h_t_offset_m + self.h_r_m)
            }
        }
    }

    /// Separation along the wall, `sqrt(d0^2 + dz^2)`.
    pub fn horizontal_separation(&self, dz: f64) -> f64 {
        self.d0_m.hypot(dz)
    }

    pub fn tx_height(&self, dx: f64) -> f64 {
        dx + self.h_t_offset_m
    }

    /// `h_t < d < 4 h_t h_r / lambda`, the regime with alternating fading fringes.
    pub fn fading_condition(&self, dx: f64, dz: f64, f_hz: f64) -> bool {
        let lambda = SPEED_OF_LIGHT / f_hz;
        let d = self.horizontal_separation(dz);
        let h_t = self.tx_height(dx);
        h_t < d && d < 4.0 * h_t * self.h_r_m / lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLengths {
    pub los_m: f64,
    pub reflected_m: f64,
}

impl PathLengths {
    pub fn difference_m(&self) -> f64 {
        self.reflected_m - self.los_m
    }
}

pub fn geometry_paths(dx: f64, dz: f64, geom: &TwoRayGeometry) -> PathLengths {
    let d = geom.horizontal_separation(dz);
    let heights = geom.height_scale() * (geom.tx_height(dx) + geom.h_r_m);
    PathLengths {
        los_m: d.hypot(dx),
        reflected_m: d.hypot(heights),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayCalibration {
    pub g_los_center_db: f64,
    /// `-inf` disables the reflected ray.
    pub g_ref_center_db: f64,
    pub taper_corner_drop_db: f64,
    pub reflection_phase_rad: f64,
}

impl Default for RayCalibration {
    fn default() -> Self {
        RayCalibration {
            g_los_center_db: -79.6,
            g_ref_center_db: -89.95,
            taper_corner_drop_db: 0.6686,
            reflection_phase_rad: PI,
        }
    }
}

impl RayCalibration {
    pub fn validate(&self) -> Result<()> {
        if !self.g_los_center_db.is_finite() {
            return Err(Error::InvalidParameter("LoS gain must be finite".into()));
        }
        if !(self.g_los_center_db > self.g_ref_center_db) {
            return Err(Error::InvalidParameter(format!(
                "LoS gain {} dB must exceed reflected gain {} dB",
                self.g_los_center_db, self.g_ref_center_db
            )));
        }
        if !(self.taper_corner_drop_db >= 0.0) || !self.reflection_phase_rad.is_finite() {
            return Err(Error::InvalidParameter(
                "taper drop must be >= 0 and reflection phase finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayKind {
    Los,
    Reflected,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayComponent {
    pub delay_s: f64,
    pub gain: Complex64,
    pub kind: RayKind,
}

impl RayComponent {
    pub fn gain_db(&self) -> f64 {
        20.0 * self.gain.norm().log10()
    }
}

/// The LoS ray and, unless disabled, the reflected ray at one port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortRays {
    pub los: RayComponent,
    pub reflected: Option<RayComponent>,
}

/// Two-ray model bound to a port grid. The grid fixes the center anchor and
/// the farthest corner used to calibrate the directivity taper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRayModel {
    pub geom: TwoRayGeometry,
    pub calib: RayCalibration,
    center: PathLengths,
    /// Taper in dB per square meter of radial offset.
    taper_db_per_m2: f64,
}

impl TwoRayModel {
    pub fn new(grid: &PortGrid, geom: TwoRayGeometry, calib: RayCalibration) -> Result<Self> {
        grid.validate()?;
        geom.validate()?;
        calib.validate()?;
        let center = geometry_paths(0.0, 0.0, &geom);

        let (dx, dz) = farthest_corner(grid);
        let r2 = dx * dx + dz * dz;
        let taper_db_per_m2 = if r2 > 0.0 {
            let corner = geometry_paths(dx, dz, &geom);
            let spreading_drop = 20.0 * (corner.los_m / center.los_m).log10();
            ((calib.taper_corner_drop_db - spreading_drop) / r2).max(0.0)
        } else {
            0.0
        };
        Ok(TwoRayModel {
            geom,
            calib,
            center,
            taper_db_per_m2,
        })
    }

    pub fn center_paths(&self) -> PathLengths {
        self.center
    }

    pub fn taper_db(&self, dx: f64, dz: f64) -> f64 {
        -self.taper_db_per_m2 * (dx * dx + dz * dz)
    }

    pub fn ray_components(&self, dx: f64, dz: f64, f_hz: f64) -> PortRays {
        let paths = geometry_paths(dx, dz, &self.geom);
        let taper = self.taper_db(dx, dz);

        let los_db = self.calib.g_los_center_db + 20.0 * (self.center.los_m / paths.los_m).log10() + taper;
        let los = RayComponent {
            delay_s: paths.los_m / SPEED_OF_LIGHT,
            gain: Complex64::from_polar(db_to_amplitude(los_db), propagation_phase(f_hz, paths.los_m)),
            kind: RayKind::Los,
        };

        let reflected = (self.calib.g_ref_center_db > f64::NEG_INFINITY).then(|| {
            let ref_db =
                self.calib.g_ref_center_db + 20.0 * (self.center.reflected_m / paths.reflected_m).log10() + taper;
            RayComponent {
                delay_s: paths.reflected_m / SPEED_OF_LIGHT,
                gain: Complex64::from_polar(
                    db_to_amplitude(ref_db),
                    self.calib.reflection_phase_rad + propagation_phase(f_hz, paths.reflected_m),
                ),
                kind: RayKind::Reflected,
            }
        });
        PortRays { los, reflected }
    }

    /// Superposed narrowband coefficient `alpha_los + alpha_ref` at one port.
    pub fn port_coefficient(&self, dx: f64, dz: f64, f_hz: f64) -> Complex64 {
        let rays = self.ray_components(dx, dz, f_hz);
        rays.los.gain + rays.reflected.map_or(Complex64::new(0.0, 0.0), |r| r.gain)
    }

    /// Transfer function of one port over the sweep.
    pub fn port_ctf(&self, dx: f64, dz: f64, freq: &FrequencyGrid) -> Vec<Complex64> {
        let paths = geometry_paths(dx, dz, &self.geom);
        // Magnitudes are frequency-flat; evaluate once and rotate per sample.
        let rays = self.ray_components(dx, dz, freq.f_start_hz);
        let los_amp = rays.los.gain.norm();
        let ref_amp = rays.reflected.map(|r| r.gain.norm());
        (0..freq.n_points)
            .map(|k| {
                let f = freq.frequency(k);
                let mut v = Complex64::from_polar(los_amp, propagation_phase(f, paths.los_m));
                if let Some(amp) = ref_amp {
                    v += Complex64::from_polar(
                        amp,
                        self.calib.reflection_phase_rad + propagation_phase(f, paths.reflected_m),
                    );
                }
                v
            })
            .collect()
    }

    pub fn synth_ctf(&self, grid: &PortGrid, freq: &FrequencyGrid) -> Result<ChannelDataset> {
        freq.validate()?;
        let ports: Vec<(usize, usize)> = (0..grid.rows)
            .flat_map(|r| (0..grid.cols).map(move |c| (r, c)))
            .collect();
        let data: Vec<Complex64> = ports
            .par_iter()
            .flat_map_iter(|&(r, c)| self.port_ctf(grid.dx(c), grid.dz(r), freq))
            .collect();
        let ctf = Array3::from_shape_vec((grid.rows, grid.cols, freq.n_points), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        ChannelDataset::new(*grid, *freq, ctf, "two-ray synthetic")
    }
}

/// Synthesize a full dataset for `grid` over `freq`.
pub fn synth_ctf(
    grid: &PortGrid,
    freq: &FrequencyGrid,
    geom: TwoRayGeometry,
    calib: RayCalibration,
) -> Result<ChannelDataset> {
    TwoRayModel::new(grid, geom, calib)?.synth_ctf(grid, freq)
}

/// Offset `(dx, dz)` of the corner port farthest from the center.
pub fn farthest_corner(grid: &PortGrid) -> (f64, f64) {
    let xs = [grid.dx(0), grid.dx(grid.cols - 1)];
    let zs = [grid.dz(0), grid.dz(grid.rows - 1)];
    let mut best = (0.0, 0.0);
    for &x in &xs {
        for &z in &zs {
            if x * x + z * z > best.0 * best.0 + best.1 * best.1 {
                best = (x, z);
            }
        }
    }
    best
}

fn propagation_phase(f_hz: f64, length_m: f64) -> f64 {
    -2.0 * PI * f_hz * length_m / SPEED_OF_LIGHT
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
