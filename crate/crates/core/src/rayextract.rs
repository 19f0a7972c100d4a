//! From swept transfer functions to impulse responses and resolved rays.
//!
//! Transform convention: the impulse response is the normalized inverse DFT
//! over the frequency index,
//!
//! ```text
//! cir[n] = (1/N) * sum_k w[k] * ctf[k] * exp(+j 2 pi k n / N)
//! ```
//!
//! so a single ray `a * exp(-j 2 pi f_k tau)` with `tau` on the bin grid shows
//! up as a peak of height `|a|` at bin `tau * N * df`, and the total impulse
//! response energy equals the mean transfer-function energy. Bin spacing is
//! `1 / (N df)` and the alias period is `1 / df`.
//!
//! Ray gains and delays are read at the local maximum of the continuous
//! inverse transform around each peak bin, which removes the scalloping loss
//! of rays that fall between bins.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chanstore::{ChannelDataset, FrequencyGrid, PortGrid};
use crate::error::{Error, Result};
use crate::tworay::{RayComponent, RayKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    None,
    /// Hann taper scaled to unit mean, so on-bin peak heights are preserved.
    Hann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulseResponse {
    pub bins: Vec<Complex64>,
    pub bin_spacing_s: f64,
    pub max_excess_delay_s: f64,
    /// Windowed transfer function the bins were computed from.
    spectrum: Vec<Complex64>,
}

impl ChannelImpulseResponse {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn delay_of_bin(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_spacing_s
    }

    /// Continuous inverse transform at delay `t`; equals `bins[n]` at `t = n * bin_spacing`.
    pub fn evaluate(&self, t: f64) -> Complex64 {
        let n = self.spectrum.len();
        let step = 2.0 * PI * t / (n as f64 * self.bin_spacing_s);
        let rot = Complex64::from_polar(1.0, step);
        // Chunked recurrence keeps the phasor accurate over ~1000 samples.
        let mut acc = Complex64::new(0.0, 0.0);
        let mut phasor = Complex64::new(1.0, 0.0);
        for (k, s) in self.spectrum.iter().enumerate() {
            if k % 64 == 0 {
                phasor = Complex64::from_polar(1.0, step * k as f64);
            }
            acc += s * phasor;
            phasor *= rot;
        }
        acc / n as f64
    }
}

/// Reusable inverse-transform plan for one sweep length and window.
pub struct CirProcessor {
    freq: FrequencyGrid,
    taper: Option<Vec<f64>>,
    plan: Arc<dyn Fft<f64>>,
}

impl CirProcessor {
    pub fn new(freq: &FrequencyGrid, window: Window) -> Result<Self> {
        freq.validate()?;
        let n = freq.n_points;
        let taper = match window {
            Window::None => None,
            Window::Hann => {
                let raw: Vec<f64> = (0..n)
                    .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
                    .collect();
                let mean = raw.iter().sum::<f64>() / n as f64;
                Some(raw.into_iter().map(|w| w / mean).collect())
            }
        };
        let plan = FftPlanner::new().plan_fft_inverse(n);
        Ok(CirProcessor {
            freq: *freq,
            taper,
            plan,
        })
    }

    pub fn transform(&self, ctf: &[Complex64]) -> Result<ChannelImpulseResponse> {
        let n = self.freq.n_points;
        if ctf.len() != n {
            return Err(Error::Shape(format!(
                "transfer function has {} samples, sweep has {n}",
                ctf.len()
            )));
        }
        let spectrum: Vec<Complex64> = match &self.taper {
            None => ctf.to_vec(),
            Some(w) => ctf.iter().zip(w).map(|(v, w)| v * w).collect(),
        };
        let mut bins = spectrum.clone();
        self.plan.process(&mut bins);
        let scale = 1.0 / n as f64;
        bins.iter_mut().for_each(|v| *v *= scale);
        let df = self.freq.step_hz();
        Ok(ChannelImpulseResponse {
            bins,
            bin_spacing_s: 1.0 / (n as f64 * df),
            max_excess_delay_s: 1.0 / df,
            spectrum,
        })
    }
}

pub fn ctf_to_cir(ctf: &[Complex64], freq: &FrequencyGrid, window: Window) -> Result<ChannelImpulseResponse> {
    CirProcessor::new(freq, window)?.transform(ctf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    /// Number of rays to resolve.
    pub k: usize,
    pub min_separation_s: f64,
    /// Peaks more than this far below the strongest bin are ignored.
    pub threshold_db: f64,
    /// Read gain and delay at the continuous peak instead of the bin.
    pub refine: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            k: 2,
            min_separation_s: 50e-12,
            threshold_db: 25.0,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Sorted by delay. The first is the LoS ray, the second the reflected ray.
    pub rays: Vec<RayComponent>,
    /// Fewer than `k` peaks cleared the threshold.
    pub incomplete: bool,
}

impl Extraction {
    pub fn ray(&self, kind: RayKind) -> Option<&RayComponent> {
        self.rays.iter().find(|r| r.kind == kind)
    }
}

pub fn extract_rays(cir: &ChannelImpulseResponse, opts: &ExtractOptions) -> Result<Extraction> {
    if opts.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mags: Vec<f64> = cir.bins.iter().map(|v| v.norm()).collect();
    let n = mags.len();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(Extraction {
            rays: Vec::new(),
            incomplete: true,
        });
    }
    let floor = peak * 10f64.powf(-opts.threshold_db / 20.0);

    // Circular local maxima; plateaus resolve to their first bin.
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = mags[(i + n - 1) % n];
            let next = mags[(i + 1) % n];
            mags[i] >= floor && (n == 1 || (mags[i] > prev && mags[i] >= next))
        })
        .collect();
    candidates.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));

    let mut chosen: Vec<usize> = Vec::with_capacity(opts.k);
    for i in candidates {
        if chosen.len() == opts.k {
            break;
        }
        let separated = chosen.iter().all(|&j| {
            let gap = i.abs_diff(j) as f64 * cir.bin_spacing_s;
            gap >= opts.min_separation_s
        });
        if separated {
            chosen.push(i);
        }
    }

    let mut rays: Vec<RayComponent> = chosen
        .iter()
        .map(|&bin| {
            let (delay_s, gain) = if opts.refine {
                refine_peak(cir, bin)
            } else {
                (cir.delay_of_bin(bin), cir.bins[bin])
            };
            RayComponent {
                delay_s,
                gain,
                kind: RayKind::Other,
            }
        })
        .collect();
    rays.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    for (ray, kind) in rays.iter_mut().zip([RayKind::Los, RayKind::Reflected]) {
        ray.kind = kind;
    }
    Ok(Extraction {
        incomplete: rays.len() < opts.k,
        rays,
    })
}

/// Maximize `|cir(t)|` within one bin of `bin`: a 17-point scan, then a
/// golden-section search around the best scan point.
fn refine_peak(cir: &ChannelImpulseResponse, bin: usize) -> (f64, Complex64) {
    let dt = cir.bin_spacing_s;
    let center = bin as f64 * dt;
    let scan = 16;
    let mut best_t = center;
    let mut best = cir.bins[bin].norm();
    for i in 0..=scan {
        let t = center + dt * (2.0 * i as f64 / scan as f64 - 1.0);
        let v = cir.evaluate(t).norm();
        if v > best {
            best = v;
            best_t = t;
        }
    }

    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best_t - dt / 8.0, best_t + dt / 8.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = cir.evaluate(x1).norm();
    let mut f2 = cir.evaluate(x2).norm();
    for _ in 0..48 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = cir.evaluate(x2).norm();
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = cir.evaluate(x1).norm();
        }
    }
    let t = 0.5 * (lo + hi);
    let v = cir.evaluate(t);
    if v.norm() >= best {
        (t, v)
    } else {
        (best_t, cir.evaluate(best_t))
    }
}

/// Wrap to `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let wrapped = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let jump = p - phases[i - 1];
            if jump > PI {
                offset -= 2.0 * PI;
            } else if jump < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Per-port gain, phase and delay of one ray kind. Ports where the ray was not
/// resolved hold `NaN` and are flagged in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMap {
    pub grid: PortGrid,
    pub kind: RayKind,
    pub gain_db: Array2<f64>,
    pub phase_rad: Array2<f64>,
    pub delay_s: Array2<f64>,
    pub missing: Array2<bool>,
}

impl RayMap {
    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row,col,gain_db,phase_rad,delay_ns\n");
        for r in 0..self.grid.rows {
            for c in 0..self.grid.cols {
                if self.missing[[r, c]] {
                    out.push_str(&format!("{r},{c},,,\n"));
                } else {
                    out.push_str(&format!(
                        "{r},{c},{:.6},{:.6},{:.6}\n",
                        self.gain_db[[r, c]],
                        self.phase_rad[[r, c]],
                        self.delay_s[[r, c]] * 1e9
                    ));
                }
            }
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Ray extraction at every port, in row-major order.
pub fn extract_all_ports(ds: &ChannelDataset, window: Window, opts: &ExtractOptions) -> Result<Vec<Extraction>> {
    let processor = CirProcessor::new(&ds.freq, window)?;
    let ports: Vec<(usize, usize)> = (0..ds.grid.rows)
        .flat_map(|r| (0..ds.grid.cols).map(move |c| (r, c)))
        .collect();
    ports
        .par_iter()
        .map(|&(r, c)| {
            let cir = processor.transform(&ds.port_ctf(r, c))?;
            extract_rays(&cir, opts)
        })
        .collect()
}

pub fn ray_map_from(grid: &PortGrid, extractions: &[Extraction], kind: RayKind) -> RayMap {
    let shape = (grid.rows, grid.cols);
    let mut map = RayMap {
        grid: *grid,
        kind,
        gain_db: Array2::from_elem(shape, f64::NAN),
        phase_rad: Array2::from_elem(shape, f64::NAN),
        delay_s: Array2::from_elem(shape, f64::NAN),
        missing: Array2::from_elem(shape, true),
    };
    for (idx, ex) in extractions.iter().enumerate() {
        let (r, c) = (idx / grid.cols, idx % grid.cols);
        if let Some(ray) = ex.ray(kind) {
            map.gain_db[[r, c]] = ray.gain_db();
            map.phase_rad[[r, c]] = wrap_phase(ray.gain.arg());
            map.delay_s[[r, c]] = ray.delay_s;
            map.missing[[r, c]] = false;
        }
    }
    map
}

pub fn port_ray_maps(ds: &ChannelDataset, kind: RayKind, window: Window, opts: &ExtractOptions) -> Result<RayMap> {
    let extractions = extract_all_ports(ds, window, opts)?;
    Ok(ray_map_from(&ds.grid, &extractions, kind))
}
