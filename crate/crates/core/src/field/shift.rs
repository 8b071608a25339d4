use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::fft::plan;
use super::ComplexField;

/// Circular roll: `out[r][c] = input[r - dy][c - dx]` (indices wrap).
fn roll<T: Copy>(input: &Array2<T>, dx: i64, dy: i64) -> Array2<T> {
    let (h, w) = input.dim();
    let sy = dy.rem_euclid(h as i64) as usize;
    let sx = dx.rem_euclid(w as i64) as usize;
    Array2::from_shape_fn((h, w), |(r, c)| input[[(r + h - sy) % h, (c + w - sx) % w]])
}

/// Signed FFT frequency index of native bin `i` on an axis of length `n`.
fn signed_bin(i: usize, n: usize) -> f64 {
    // matches the centered convention: centered index runs from -(n/2)
    let centered = (i + n / 2) % n;
    centered as f64 - (n / 2) as f64
}

/// Translates `field` by `(shift_x, shift_y)` pixels: the sample at `(x, y)`
/// moves to `(x + shift_x, y + shift_y)` with circular wrap.
///
/// Integer shifts are exact index rolls. Fractional shifts multiply the
/// spectrum by `exp(-i (kx dx + ky dy))`.
///
/// # Panics
///
/// If either shift is not finite.
pub fn shift_field(field: &ComplexField, shift_x: f64, shift_y: f64) -> ComplexField {
    assert!(
        shift_x.is_finite() && shift_y.is_finite(),
        "shift must be finite, got ({shift_x}, {shift_y})"
    );
    if shift_x.fract() == 0.0 && shift_y.fract() == 0.0 {
        return ComplexField::from_parts(
            roll(field.data(), shift_x as i64, shift_y as i64),
            field.pixel_pitch(),
        );
    }
    let (h, w) = field.dim();
    let plan = plan(h, w);
    let mut data = field.data().clone();
    plan.forward(&mut data);
    for ((i, j), z) in data.indexed_iter_mut() {
        let ky = 2.0 * PI * signed_bin(i, h) / h as f64;
        let kx = 2.0 * PI * signed_bin(j, w) / w as f64;
        *z *= Complex64::from_polar(1.0, -(kx * shift_x + ky * shift_y));
    }
    plan.inverse(&mut data);
    ComplexField::from_parts(data, field.pixel_pitch())
}
