use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical context shared by every operation: illumination wavelength,
/// objective aperture, object-to-diffuser distance and the sampling grid.
///
/// All lengths are in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalConfig {
    pub wavelength: f64,
    pub objective_na: f64,
    pub diffuser_distance: f64,
    pub pixel_pitch: f64,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::Config(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.objective_na > 0.0 && self.objective_na < 1.0) {
            return Err(Error::Config(format!(
                "objective NA must lie in (0, 1), got {}",
                self.objective_na
            )));
        }
        if !(self.diffuser_distance.is_finite() && self.diffuser_distance >= 0.0) {
            return Err(Error::Config(format!(
                "diffuser distance must be finite and >= 0, got {}",
                self.diffuser_distance
            )));
        }
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return Err(Error::Config(format!(
                "pixel pitch must be positive, got {}",
                self.pixel_pitch
            )));
        }
        if self.grid_height < 2 || self.grid_width < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_height, self.grid_width
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.grid_height, self.grid_width)
    }

    pub fn with_grid(&self, height: usize, width: usize) -> Self {
        Self {
            grid_height: height,
            grid_width: width,
            ..*self
        }
    }

    /// Free-space wavenumber `2 pi / lambda` in rad/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Largest NA the grid can represent along an axis, `lambda / (2 pitch)`.
    pub fn nyquist_na(&self) -> f64 {
        self.wavelength / (2.0 * self.pixel_pitch)
    }

    /// Whether the grid samples the objective passband.
    pub fn represents_objective(&self) -> bool {
        self.nyquist_na() > self.objective_na
    }

    /// Whether a total synthesis bandwidth of `na` fits on the grid.
    pub fn represents_na(&self, na: f64) -> bool {
        self.nyquist_na() >= na
    }

    /// Coherent diffraction-limited half-pitch, `lambda / (2 NA)`.
    pub fn diffraction_limit(&self) -> f64 {
        self.wavelength / (2.0 * self.objective_na)
    }

    /// Pupil cutoff as an angular spatial frequency, `2 pi NA / lambda`.
    pub fn pupil_cutoff(&self) -> f64 {
        self.wavenumber() * self.objective_na
    }

    pub fn field_of_view(&self) -> (f64, f64) {
        (
            self.grid_height as f64 * self.pixel_pitch,
            self.grid_width as f64 * self.pixel_pitch,
        )
    }

    /// Angular frequency (rad/m) of centered spectral index `index` on an
    /// axis of length `n`.
    pub(crate) fn angular_frequency(&self, index: usize, n: usize) -> f64 {
        let k = index as f64 - (n / 2) as f64;
        2.0 * PI * k / (n as f64 * self.pixel_pitch)
    }
}
