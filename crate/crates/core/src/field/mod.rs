//! Complex-field primitives: the field container, optical configuration,
//! centered spectral transforms, angular-spectrum propagation, the defocus
//! coherent transfer function and lateral shifts.

mod config;
pub(crate) mod fft;
mod propagation;
mod shift;

pub use config::OpticalConfig;
pub use fft::{forward_spectrum, inverse_spectrum};
pub use propagation::{angular_spectrum_transfer, defocus_ctf, propagate};
pub use shift::shift_field;

pub(crate) use propagation::{ctf_native, transfer_native};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A sampled 2D complex amplitude with square pixels.
///
/// Invariants: both dimensions are at least 2, the pitch is positive and
/// finite, and every sample is finite. Fields are immutable values; every
/// operation returns a new field.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    pixel_pitch: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pixel_pitch: f64) -> Result<Self> {
        let (h, w) = data.dim();
        if h < 2 || w < 2 {
            return Err(Error::InvalidField(format!(
                "grid must be at least 2x2, got {h}x{w}"
            )));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(Error::InvalidField(format!(
                "pixel pitch must be positive and finite, got {pixel_pitch}"
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "field samples".into(),
            });
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self { data, pixel_pitch })
    }

    /// Wraps an array that the caller has produced from finite inputs.
    pub(crate) fn from_parts(data: Array2<Complex64>, pixel_pitch: f64) -> Self {
        debug_assert!(data.dim().0 >= 2 && data.dim().1 >= 2);
        debug_assert!(data.is_standard_layout());
        Self { data, pixel_pitch }
    }

    pub fn from_fn<F>(height: usize, width: usize, pixel_pitch: f64, f: F) -> Result<Self>
    where
        F: FnMut((usize, usize)) -> Complex64,
    {
        Self::new(Array2::from_shape_fn((height, width), f), pixel_pitch)
    }

    pub fn filled(height: usize, width: usize, pixel_pitch: f64, value: Complex64) -> Result<Self> {
        Self::new(Array2::from_elem((height, width), value), pixel_pitch)
    }

    pub fn ones(height: usize, width: usize, pixel_pitch: f64) -> Result<Self> {
        Self::filled(height, width, pixel_pitch, Complex64::new(1.0, 0.0))
    }

    pub fn zeros(height: usize, width: usize, pixel_pitch: f64) -> Result<Self> {
        Self::filled(height, width, pixel_pitch, Complex64::new(0.0, 0.0))
    }

    /// Unit-amplitude field with the given phase map.
    pub fn from_phase(phase: &Array2<f64>, pixel_pitch: f64) -> Result<Self> {
        Self::new(phase.mapv(|p| Complex64::from_polar(1.0, p)), pixel_pitch)
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[[row, col]]
    }

    /// Applies `f` to every sample, re-validating finiteness.
    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<Self> {
        Self::new(self.data.mapv(f), self.pixel_pitch)
    }

    pub fn scale(&self, factor: Complex64) -> Result<Self> {
        self.map(|z| z * factor)
    }

    /// Total power, `sum |f|^2`.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm_sqr())
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|z| z.arg())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest pointwise modulus of the difference to `other`.
    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff on mismatched grids");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn ensure_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Self::new(&self.data + &other.data, self.pixel_pitch)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Self::new(&self.data - &other.data, self.pixel_pitch)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ComplexField) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Self::new(&self.data * &other.data, self.pixel_pitch)
    }
}
