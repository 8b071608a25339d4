use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::fft::plan;
use crate::field::{transfer_native, ComplexField, OpticalConfig};

/// Complex fields of one wavefront propagated to a set of planes.
#[derive(Clone, Debug)]
pub struct RefocusStack {
    /// `(z, field)` pairs with strictly increasing `z` (meters).
    pub planes: Vec<(f64, ComplexField)>,
    pub config: OpticalConfig,
}

/// One plane of a stack without its samples, as written to `stack.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneInfo {
    pub z: f64,
    pub file: String,
    #[serde(default)]
    pub sha256: String,
}

impl RefocusStack {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.planes.iter().map(|(z, _)| *z).collect()
    }

    /// `|O_z|^2` as a `(plane, row, col)` volume.
    pub fn intensity_volume(&self) -> Array3<f64> {
        let (h, w) = self.config.dim();
        let mut out = Array3::zeros((self.planes.len(), h, w));
        for (k, (_, f)) in self.planes.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), k).assign(&f.intensity());
        }
        out
    }
}

fn check_z_list(z_list: &[f64]) -> Result<()> {
    if z_list.is_empty() {
        return Err(Error::Empty("refocus needs at least one z".into()));
    }
    if let Some(z) = z_list.iter().find(|z| !z.is_finite()) {
        return Err(Error::Config(format!("refocus distance {z} is not finite")));
    }
    if z_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("refocus z values must be strictly increasing".into()));
    }
    Ok(())
}

/// Propagates `wavefront` to every `z` in `z_list`. Planes are computed in
/// parallel from one shared spectrum.
pub fn refocus(wavefront: &ComplexField, config: &OpticalConfig, z_list: &[f64]) -> Result<RefocusStack> {
    config.validate()?;
    check_z_list(z_list)?;
    if wavefront.dim() != config.dim() {
        return Err(Error::GridMismatch {
            expected: config.dim(),
            found: wavefront.dim(),
        });
    }
    wavefront.ensure_finite("refocus input")?;
    let (h, w) = config.dim();
    let fft = plan(h, w);
    let mut spectrum = wavefront.data().clone();
    fft.forward(&mut spectrum);
    let pitch = wavefront.pixel_pitch();
    let planes = z_list
        .par_iter()
        .map(|&z| {
            let mut data: Array2<Complex64> = &spectrum * &transfer_native(config, z);
            fft.inverse(&mut data);
            (z, ComplexField::from_parts(data, pitch))
        })
        .collect();
    Ok(RefocusStack {
        planes,
        config: *config,
    })
}
