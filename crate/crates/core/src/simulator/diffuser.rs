use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::fft::plan;
use crate::field::{ComplexField, OpticalConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffuserKind {
    /// Hemispherical phase bumps of diameter `feature_size`, placed by
    /// Poisson-disc dart throwing.
    MicrosphereMonolayer,
    /// Gaussian white noise low-pass filtered to `1 / (2 feature_size)`
    /// cycles per meter, mapped to `[0, phase_depth]`.
    RandomPhaseSmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuserSpec {
    pub kind: DiffuserKind,
    /// Meters. Sphere diameter, or the half-period of the finest phase
    /// fluctuation for the smooth kind.
    pub feature_size: f64,
    /// Radians, peak phase.
    pub phase_depth: f64,
    #[serde(default = "default_fill")]
    pub fill_fraction: f64,
    pub seed: u64,
}

fn default_fill() -> f64 {
    0.5
}

impl DiffuserSpec {
    pub fn validate(&self, config: &OpticalConfig) -> Result<()> {
        if !(self.feature_size.is_finite() && self.feature_size > 0.0) {
            return Err(Error::Config("diffuser feature size must be positive".into()));
        }
        // the smooth kind needs its cutoff below Nyquist, spheres need a
        // radius of at least one pixel
        let min = match self.kind {
            DiffuserKind::RandomPhaseSmooth => config.pixel_pitch,
            DiffuserKind::MicrosphereMonolayer => 2.0 * config.pixel_pitch,
        };
        if self.feature_size < min {
            return Err(Error::Config(format!(
                "diffuser feature size {:.3e} m is below the representable minimum {:.3e} m",
                self.feature_size, min
            )));
        }
        let total = config.objective_na + self.spectral_na(config.wavelength);
        if !config.represents_na(total) {
            return Err(Error::Config(format!(
                "grid Nyquist NA {:.3} cannot represent the synthesis bandwidth {:.3} (objective + diffuser)",
                config.nyquist_na(),
                total
            )));
        }
        if !(self.phase_depth.is_finite() && self.phase_depth >= 0.0) {
            return Err(Error::Config("diffuser phase depth must be >= 0".into()));
        }
        if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
            return Err(Error::Config("diffuser fill fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// NA corresponding to the finest diffuser feature, `lambda / (2 feature)`.
    pub fn spectral_na(&self, wavelength: f64) -> f64 {
        wavelength / (2.0 * self.feature_size)
    }
}

/// Generates a unit-amplitude phase diffuser on `config`'s grid.
pub fn make_diffuser(spec: &DiffuserSpec, config: &OpticalConfig) -> Result<ComplexField> {
    config.validate()?;
    spec.validate(config)?;
    let phase = match spec.kind {
        DiffuserKind::RandomPhaseSmooth => smooth_phase(spec, config),
        DiffuserKind::MicrosphereMonolayer => microsphere_phase(spec, config),
    };
    ComplexField::from_phase(&phase, config.pixel_pitch)
}

fn smooth_phase(spec: &DiffuserSpec, config: &OpticalConfig) -> Array2<f64> {
    let (h, w) = config.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Array2::from_shape_simple_fn((h, w), || {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0)
    });
    let fft = plan(h, w);
    fft.forward(&mut data);
    let cutoff = 1.0 / (2.0 * spec.feature_size);
    let (fh, fw) = (h as f64 * config.pixel_pitch, w as f64 * config.pixel_pitch);
    for ((i, j), z) in data.indexed_iter_mut() {
        let ky = signed(i, h) / fh;
        let kx = signed(j, w) / fw;
        if (kx * kx + ky * ky).sqrt() > cutoff {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    fft.inverse(&mut data);
    let raw = data.mapv(|z| z.re);
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 || spec.phase_depth == 0.0 {
        return Array2::zeros((h, w));
    }
    raw.mapv(|v| spec.phase_depth * (v - lo) / (hi - lo))
}

fn signed(i: usize, n: usize) -> f64 {
    if i <= (n - 1) / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn microsphere_phase(spec: &DiffuserSpec, config: &OpticalConfig) -> Array2<f64> {
    let (h, w) = config.dim();
    let mut phase = Array2::zeros((h, w));
    if spec.phase_depth == 0.0 {
        return phase;
    }
    let radius = 0.5 * spec.feature_size / config.pixel_pitch;
    let centers = poisson_disc(h, w, radius, spec.fill_fraction, spec.seed);
    let reach = radius.ceil() as i64;
    for (cy, cx) in centers {
        let (r0, c0) = (cy.floor() as i64, cx.floor() as i64);
        for dr in -reach - 1..=reach + 1 {
            for dc in -reach - 1..=reach + 1 {
                let r = r0 + dr;
                let c = c0 + dc;
                let dy = r as f64 - cy;
                let dx = c as f64 - cx;
                let rho2 = (dx * dx + dy * dy) / (radius * radius);
                if rho2 < 1.0 {
                    let rr = r.rem_euclid(h as i64) as usize;
                    let cc = c.rem_euclid(w as i64) as usize;
                    phase[[rr, cc]] += spec.phase_depth * (1.0 - rho2).sqrt();
                }
            }
        }
    }
    phase
}

/// Random sequential placement of non-overlapping discs of `radius` pixels
/// on a periodic `h x w` grid until `fill` area coverage or saturation.
fn poisson_disc(h: usize, w: usize, radius: f64, fill: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = (h * w) as f64;
    let disc = std::f64::consts::PI * radius * radius;
    let target = ((fill * area) / disc).floor() as usize;
    let min_dist = 2.0 * radius;
    // bucket grid with cells of one minimum distance
    let cell = min_dist;
    let (gh, gw) = (
        ((h as f64 / cell).floor() as usize).max(1),
        ((w as f64 / cell).floor() as usize).max(1),
    );
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); gh * gw];
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(target);
    let max_attempts = 60 * target.max(1);
    let wrap = |d: f64, n: f64| {
        let d = d.rem_euclid(n);
        d.min(n - d)
    };
    for _ in 0..max_attempts {
        if centers.len() >= target {
            break;
        }
        let y = rng.random_range(0.0..h as f64);
        let x = rng.random_range(0.0..w as f64);
        let by = ((y / h as f64) * gh as f64) as usize % gh;
        let bx = ((x / w as f64) * gw as f64) as usize % gw;
        let mut ok = true;
        'search: for oy in [gh - 1, 0, 1] {
            for ox in [gw - 1, 0, 1] {
                let b = ((by + oy) % gh) * gw + (bx + ox) % gw;
                for &k in &buckets[b] {
                    let (cy, cx) = centers[k];
                    let dy = wrap(y - cy, h as f64);
                    let dx = wrap(x - cx, w as f64);
                    if dx * dx + dy * dy < min_dist * min_dist {
                        ok = false;
                        break 'search;
                    }
                }
            }
        }
        if ok {
            buckets[by * gw + bx].push(centers.len());
            centers.push((y, x));
        }
    }
    centers
}
