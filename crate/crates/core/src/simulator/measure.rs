use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scan::{DiffuserFrame, ScanSequence, DEFAULT_DIFFUSER_MARGIN};
use crate::error::{Error, Result};
use crate::field::fft::{plan, transposed, Fft2};
use crate::field::{ctf_native, propagate, ComplexField, OpticalConfig};

/// Camera noise: Poisson shot noise at `photon_budget` expected photons for
/// the brightest pixel of the stack plus Gaussian read noise (in photons).
/// `photon_budget = None` disables noise entirely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub photon_budget: Option<f64>,
    #[serde(default)]
    pub read_noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            photon_budget: None,
            read_noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn shot(photon_budget: f64, seed: u64) -> Self {
        Self {
            photon_budget: Some(photon_budget),
            read_noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.photon_budget {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Config(format!("photon budget must be positive, got {p}")));
            }
        }
        if !(self.read_noise_sigma.is_finite() && self.read_noise_sigma >= 0.0) {
            return Err(Error::Config("read noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// A stack of intensity images with the scan and optics that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub images: Vec<Array2<f64>>,
    pub scan: ScanSequence,
    pub config: OpticalConfig,
    pub diffuser_margin: usize,
}

impl MeasurementSet {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.images.is_empty() {
            return Err(Error::Empty("measurement set has no images".into()));
        }
        if self.images.len() != self.scan.len() {
            return Err(Error::Config(format!(
                "{} images but {} scan positions",
                self.images.len(),
                self.scan.len()
            )));
        }
        for (j, img) in self.images.iter().enumerate() {
            if img.dim() != self.config.dim() {
                return Err(Error::GridMismatch {
                    expected: self.config.dim(),
                    found: img.dim(),
                });
            }
            if !img.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("image {j} has negative or non-finite pixels")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn frame(&self) -> DiffuserFrame {
        DiffuserFrame::for_scan(self.config.dim(), &self.scan, self.diffuser_margin)
    }

    /// The first `k` measurements.
    pub fn first(&self, k: usize) -> Result<MeasurementSet> {
        if k == 0 {
            return Err(Error::Empty("first-k subset must keep at least one image".into()));
        }
        let k = k.min(self.len());
        Ok(MeasurementSet {
            images: self.images[..k].to_vec(),
            scan: self.scan.truncated(k)?,
            config: self.config,
            diffuser_margin: self.diffuser_margin,
        })
    }

    pub fn max_intensity(&self) -> f64 {
        self.images
            .iter()
            .flat_map(|i| i.iter())
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn total_intensity(&self) -> f64 {
        self.images.iter().map(|i| i.sum()).sum()
    }
}

/// Per-run constants of the discrete forward model.
pub(crate) struct ForwardModel {
    pub fft: std::sync::Arc<Fft2>,
    pub ctf: Array2<Complex64>,
    pub frame: DiffuserFrame,
}

impl ForwardModel {
    pub fn new(config: &OpticalConfig, frame: DiffuserFrame) -> Self {
        Self {
            fft: plan(config.grid_height, config.grid_width),
            ctf: transposed(&ctf_native(config, -config.diffuser_distance)),
            frame,
        }
    }

    /// Detector-plane field for one scan position given the wavefront
    /// already propagated to the diffuser.
    pub fn detector_field(
        &self,
        w_prop: &Array2<Complex64>,
        diffuser: &Array2<Complex64>,
        shift: (f64, f64),
    ) -> Array2<Complex64> {
        let mut field = Array2::zeros(w_prop.dim());
        self.detector_field_into(w_prop, diffuser, shift, &mut field);
        field
    }

    /// [`ForwardModel::detector_field`] into a caller-owned buffer.
    pub fn detector_field_into(
        &self,
        w_prop: &Array2<Complex64>,
        diffuser: &Array2<Complex64>,
        shift: (f64, f64),
        field: &mut Array2<Complex64>,
    ) {
        if shift.0.fract() == 0.0 && shift.1.fract() == 0.0 {
            let (h, w) = w_prop.dim();
            let (r, c) = self.frame.window_origin(shift);
            Zip::from(&mut *field)
                .and(diffuser.slice(s![r..r + h, c..c + w]))
                .and(w_prop)
                .for_each(|f, &d, &a| *f = d * a);
        } else {
            Zip::from(&mut *field)
                .and(&self.frame.window(diffuser, shift))
                .and(w_prop)
                .for_each(|f, &d, &a| *f = d * a);
        }
        self.fft.forward_transposed(field);
        *field *= &self.ctf;
        self.fft.inverse_transposed(field);
    }
}

/// Evaluates the diffuser-modulated imaging model for every scan position:
/// propagate `w` over the diffuser distance, multiply by the shifted
/// diffuser, image through the defocused pupil and record `|.|^2`.
///
/// `diffuser` lives on the extended grid given by
/// [`DiffuserFrame::for_scan`] with the default margin.
pub fn forward_measure(
    w: &ComplexField,
    diffuser: &ComplexField,
    config: &OpticalConfig,
    scan: &ScanSequence,
    noise: &NoiseSpec,
) -> Result<MeasurementSet> {
    forward_measure_with_margin(w, diffuser, config, scan, noise, DEFAULT_DIFFUSER_MARGIN)
}

pub fn forward_measure_with_margin(
    w: &ComplexField,
    diffuser: &ComplexField,
    config: &OpticalConfig,
    scan: &ScanSequence,
    noise: &NoiseSpec,
    margin: usize,
) -> Result<MeasurementSet> {
    config.validate()?;
    noise.validate()?;
    if w.dim() != config.dim() {
        return Err(Error::GridMismatch {
            expected: config.dim(),
            found: w.dim(),
        });
    }
    let frame = DiffuserFrame::for_scan(config.dim(), scan, margin);
    if diffuser.dim() != frame.dim() {
        return Err(Error::GridMismatch {
            expected: frame.dim(),
            found: diffuser.dim(),
        });
    }
    let model = ForwardModel::new(config, frame);
    let w_prop = propagate(w, config, config.diffuser_distance)?.into_data();
    let d = diffuser.data();
    let mut images: Vec<Array2<f64>> = (0..scan.len())
        .into_par_iter()
        .map(|j| model.detector_field(&w_prop, d, scan.get(j)).mapv(|z| z.norm_sqr()))
        .collect();
    if let Some(budget) = noise.photon_budget {
        let peak = images
            .iter()
            .flat_map(|i| i.iter())
            .copied()
            .fold(0.0, f64::max);
        if peak > 0.0 {
            let scale = budget / peak;
            images
                .par_iter_mut()
                .enumerate()
                .for_each(|(j, img)| apply_noise(img, scale, noise, j as u64));
        }
    }
    let set = MeasurementSet {
        images,
        scan: scan.clone(),
        config: *config,
        diffuser_margin: margin,
    };
    set.validate()?;
    Ok(set)
}

fn apply_noise(image: &mut Array2<f64>, scale: f64, noise: &NoiseSpec, stream: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(stream);
    let read = (noise.read_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.read_noise_sigma).expect("validated sigma"));
    for v in image.iter_mut() {
        let mean = *v * scale;
        let mut counts = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(&mut rng)
        } else {
            0.0
        };
        if let Some(read) = &read {
            counts += read.sample(&mut rng);
        }
        *v = counts.max(0.0) / scale;
    }
}

/// Block-averages every image by `factor` to emulate coarser camera pixels.
/// Scan shifts and the margin are rescaled to the camera grid.
pub fn bin_measurements(set: &MeasurementSet, factor: usize) -> Result<MeasurementSet> {
    if factor == 0 {
        return Err(Error::Config("binning factor must be >= 1".into()));
    }
    let (h, w) = set.config.dim();
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Config(format!("{h}x{w} grid is not divisible by {factor}")));
    }
    let (bh, bw) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let images = set
        .images
        .iter()
        .map(|img| {
            let mut out = Array2::zeros((bh, bw));
            Zip::indexed(&mut out).for_each(|(r, c), v| {
                let mut acc = 0.0;
                for dr in 0..factor {
                    for dc in 0..factor {
                        acc += img[[r * factor + dr, c * factor + dc]];
                    }
                }
                *v = acc * norm;
            });
            out
        })
        .collect();
    let config = OpticalConfig {
        pixel_pitch: set.config.pixel_pitch * factor as f64,
        grid_height: bh,
        grid_width: bw,
        ..set.config
    };
    let binned = MeasurementSet {
        images,
        scan: set.scan.scaled(1.0 / factor as f64)?,
        config,
        diffuser_margin: set.diffuser_margin.div_ceil(factor),
    };
    binned.validate()?;
    Ok(binned)
}
