//! 2D FFTs over row-major complex grids.
//!
//! Internally spectra use the native FFT layout (DC at index 0). The public
//! [`forward_spectrum`] / [`inverse_spectrum`] pair converts to and from the
//! centered layout. The forward transform is unnormalized and the inverse
//! divides by `height * width`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::ComplexField;
use crate::error::Result;

pub(crate) struct Fft2 {
    height: usize,
    width: usize,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
}

thread_local! {
    static TRANSPOSE_BUF: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

type PlanCache = Mutex<HashMap<(usize, usize), Arc<Fft2>>>;

static PLANS: OnceLock<PlanCache> = OnceLock::new();

/// Returns a cached plan for `height x width` grids.
pub(crate) fn plan(height: usize, width: usize) -> Arc<Fft2> {
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut plans = plans.lock().expect("fft plan cache poisoned");
    plans
        .entry((height, width))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft2 {
                height,
                width,
                row_forward: planner.plan_fft_forward(width),
                row_inverse: planner.plan_fft_inverse(width),
                col_forward: planner.plan_fft_forward(height),
                col_inverse: planner.plan_fft_inverse(height),
            })
        })
        .clone()
}

fn process_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    // Chunk several rows per task so single-threaded pools avoid per-row overhead.
    let rows_per_task = (16384 / len).max(1);
    data.par_chunks_mut(len * rows_per_task).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, rows| fft.process_with_scratch(rows, scratch),
    );
}

impl Fft2 {
    fn run(&self, data: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(data.dim(), (self.height, self.width));
        let (h, w) = (self.height, self.width);
        let slice = data
            .as_slice_mut()
            .expect("fft input must be in standard layout");
        let (rows, cols) = if inverse {
            (&self.row_inverse, &self.col_inverse)
        } else {
            (&self.row_forward, &self.col_forward)
        };
        process_rows(rows, slice, w);
        TRANSPOSE_BUF.with(|buf| {
            let mut buf = buf.borrow_mut();
            buf.resize(h * w, Complex64::new(0.0, 0.0));
            transpose::transpose(slice, &mut buf, w, h);
            process_rows(cols, &mut buf, h);
            transpose::transpose(&buf, slice, h, w);
        });
        if inverse {
            let norm = 1.0 / (h * w) as f64;
            slice.par_iter_mut().for_each(|z| *z *= norm);
        }
    }

    /// Row pass, one transpose, row pass. The result is left transposed and
    /// swapped into `data`, so `data` changes shape.
    fn run_transposed(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (first, second, rows, cols) = if inverse {
            (&self.col_inverse, &self.row_inverse, self.width, self.height)
        } else {
            (&self.row_forward, &self.col_forward, self.height, self.width)
        };
        assert_eq!(data.dim(), (rows, cols));
        let slice = data
            .as_slice_mut()
            .expect("fft input must be in standard layout");
        process_rows(first, slice, cols);
        TRANSPOSE_BUF.with(|buf| {
            let mut buf = buf.borrow_mut();
            buf.resize(rows * cols, Complex64::new(0.0, 0.0));
            let slice = data.as_slice().expect("standard layout");
            transpose::transpose(slice, &mut buf, cols, rows);
            process_rows(second, &mut buf, rows);
            if inverse {
                let norm = 1.0 / (rows * cols) as f64;
                buf.par_iter_mut().for_each(|z| *z *= norm);
            }
            let out = Array2::from_shape_vec((cols, rows), std::mem::take(&mut *buf))
                .expect("buffer holds rows * cols values");
            *buf = std::mem::replace(data, out).into_raw_vec_and_offset().0;
        });
    }

    /// Forward transform of a `height x width` array into its transposed
    /// native spectrum (`width x height`).
    pub(crate) fn forward_transposed(&self, data: &mut Array2<Complex64>) {
        self.run_transposed(data, false);
    }

    /// Inverse of [`Fft2::forward_transposed`], scaled by `1 / (height * width)`.
    pub(crate) fn inverse_transposed(&self, data: &mut Array2<Complex64>) {
        self.run_transposed(data, true);
    }

    /// Unnormalized forward transform in place, native layout.
    pub(crate) fn forward(&self, data: &mut Array2<Complex64>) {
        self.run(data, false);
    }

    /// Inverse transform in place, scaled by `1 / (height * width)`.
    pub(crate) fn inverse(&self, data: &mut Array2<Complex64>) {
        self.run(data, true);
    }
}

pub(crate) fn fft2_native(data: &mut Array2<Complex64>) {
    let (h, w) = data.dim();
    plan(h, w).forward(data);
}

pub(crate) fn ifft2_native(data: &mut Array2<Complex64>) {
    let (h, w) = data.dim();
    plan(h, w).inverse(data);
}

/// Native layout to centered layout (DC moves to `(h/2, w/2)`).
pub(crate) fn center<T: Copy>(native: &Array2<T>) -> Array2<T> {
    let (h, w) = native.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        native[[(i + h - h / 2) % h, (j + w - w / 2) % w]]
    })
}

/// Standard-layout copy of the transpose, for masks applied to spectra from
/// [`Fft2::forward_transposed`].
pub(crate) fn transposed<T: Clone>(a: &Array2<T>) -> Array2<T> {
    a.t().as_standard_layout().into_owned()
}

/// Centered layout back to native layout.
pub(crate) fn decenter<T: Copy>(centered: &Array2<T>) -> Array2<T> {
    let (h, w) = centered.dim();
    Array2::from_shape_fn((h, w), |(i, j)| centered[[(i + h / 2) % h, (j + w / 2) % w]])
}

/// Centered 2D discrete Fourier spectrum of `field` (unnormalized).
pub fn forward_spectrum(field: &ComplexField) -> Result<ComplexField> {
    field.ensure_finite("forward_spectrum input")?;
    let mut data = field.data().clone();
    fft2_native(&mut data);
    ComplexField::new(center(&data), field.pixel_pitch())
}

/// Inverse of [`forward_spectrum`]; divides by `height * width`.
pub fn inverse_spectrum(spectrum: &ComplexField) -> Result<ComplexField> {
    spectrum.ensure_finite("inverse_spectrum input")?;
    let mut data = decenter(spectrum.data());
    ifft2_native(&mut data);
    ComplexField::new(data, spectrum.pixel_pitch())
}
