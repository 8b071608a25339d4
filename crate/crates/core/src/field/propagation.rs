use ndarray::Array2;
use num_complex::Complex64;

use super::fft::{center, plan};
use super::{ComplexField, OpticalConfig};
use crate::error::{Error, Result};

/// `kz = sqrt(k^2 - kx^2 - ky^2)` at native index `(i, j)`, or `None` for
/// evanescent components.
fn axial_wavenumber(config: &OpticalConfig, i: usize, j: usize) -> Option<(f64, f64)> {
    let (h, w) = config.dim();
    // native index -> centered index
    let ci = (i + h / 2) % h;
    let cj = (j + w / 2) % w;
    let ky = config.angular_frequency(ci, h);
    let kx = config.angular_frequency(cj, w);
    let k = config.wavenumber();
    let radial_sq = kx * kx + ky * ky;
    let kz_sq = k * k - radial_sq;
    (kz_sq >= 0.0).then(|| (kz_sq.sqrt(), radial_sq.sqrt()))
}

/// Angular-spectrum transfer function in native layout.
pub(crate) fn transfer_native(config: &OpticalConfig, distance: f64) -> Array2<Complex64> {
    Array2::from_shape_fn(config.dim(), |(i, j)| match axial_wavenumber(config, i, j) {
        Some((kz, _)) => Complex64::from_polar(1.0, distance * kz),
        None => Complex64::new(0.0, 0.0),
    })
}

/// Defocus coherent transfer function in native layout.
pub(crate) fn ctf_native(config: &OpticalConfig, defocus: f64) -> Array2<Complex64> {
    let cutoff = config.pupil_cutoff();
    Array2::from_shape_fn(config.dim(), |(i, j)| match axial_wavenumber(config, i, j) {
        Some((kz, radial)) if radial <= cutoff => Complex64::from_polar(1.0, defocus * kz),
        _ => Complex64::new(0.0, 0.0),
    })
}

/// Centered free-space transfer function `exp(i z kz)` for propagation over
/// `distance` meters; evanescent components are zero. Negative distances
/// back-propagate.
pub fn angular_spectrum_transfer(config: &OpticalConfig, distance: f64) -> Result<ComplexField> {
    config.validate()?;
    if !distance.is_finite() {
        return Err(Error::Config(format!("propagation distance {distance} is not finite")));
    }
    ComplexField::new(center(&transfer_native(config, distance)), config.pixel_pitch)
}

/// Centered objective pupil (hard circular cutoff at `NA / lambda`) times the
/// defocus phase `exp(i defocus kz)`.
pub fn defocus_ctf(config: &OpticalConfig, defocus: f64) -> Result<ComplexField> {
    config.validate()?;
    if !defocus.is_finite() {
        return Err(Error::Config(format!("defocus {defocus} is not finite")));
    }
    ComplexField::new(center(&ctf_native(config, defocus)), config.pixel_pitch)
}

/// Propagates `field` by `distance` meters with the angular spectrum method
/// (circular boundary).
pub fn propagate(field: &ComplexField, config: &OpticalConfig, distance: f64) -> Result<ComplexField> {
    config.validate()?;
    if field.dim() != config.dim() {
        return Err(Error::GridMismatch {
            expected: config.dim(),
            found: field.dim(),
        });
    }
    if !distance.is_finite() {
        return Err(Error::Config(format!("propagation distance {distance} is not finite")));
    }
    let transfer = transfer_native(config, distance);
    let plan = plan(config.grid_height, config.grid_width);
    let mut data = field.data().clone();
    plan.forward(&mut data);
    data *= &transfer;
    plan.inverse(&mut data);
    ComplexField::new(data, field.pixel_pitch())
}
