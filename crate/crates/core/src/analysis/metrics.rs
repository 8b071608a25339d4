use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::fft::plan;
use crate::field::ComplexField;
use crate::simulator::{BarGroup, DiffuserFrame, Orientation, ScanSequence};

/// Michelson contrast at or above which a bar group counts as resolved.
pub const RESOLVED_CONTRAST: f64 = 0.2;

fn bilinear(data: &Array2<Complex64>, row: f64, col: f64) -> Complex64 {
    let (h, w) = data.dim();
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as usize, c0 as usize);
    let r1 = (r0 + 1).min(h - 1);
    let c1 = (c0 + 1).min(w - 1);
    data[[r0, c0]] * ((1.0 - fr) * (1.0 - fc))
        + data[[r0, c1]] * ((1.0 - fr) * fc)
        + data[[r1, c0]] * (fr * (1.0 - fc))
        + data[[r1, c1]] * (fr * fc)
}

/// Mean `|field|^2` along the bars' length at each profile position, sampled
/// over the middle half of the bar length.
fn profile_samples(field: &ComplexField, group: &BarGroup, positions: &[f64]) -> Vec<f64> {
    let intensity = field.intensity();
    let len = group.footprint();
    let (lo, hi) = (len / 4, len - len / 4);
    positions
        .iter()
        .map(|&p| {
            let (p0, frac) = (p.floor() as usize, p - p.floor());
            let sum: f64 = (lo..hi)
                .map(|t| {
                    let at = |q: usize| match group.orientation {
                        Orientation::Vertical => intensity[[group.row + t, q]],
                        Orientation::Horizontal => intensity[[q, group.col + t]],
                    };
                    if frac == 0.0 {
                        at(p0)
                    } else {
                        (1.0 - frac) * at(p0) + frac * at(p0 + 1)
                    }
                })
                .sum();
            sum / (hi - lo) as f64
        })
        .collect()
}

/// Michelson contrast of a three-bar group in `[0, 1]`.
///
/// The profile is averaged along the middle half of the bars. With `b` the
/// bar-center samples and `g` the gap-center samples, the contrast is
/// `(min g - max b) / (min g + max b)` for dark bars on a bright background
/// and the mirrored expression for bright bars; whichever is larger, floored
/// at zero. A single blurred bar therefore cannot pass.
pub fn bar_contrast(field: &ComplexField, group: &BarGroup) -> Result<f64> {
    let (h, w) = field.dim();
    let len = group.footprint();
    if group.linewidth_px == 0 || group.row + len > h || group.col + len > w {
        return Err(Error::OutOfBounds(format!(
            "bar group at ({}, {}) with footprint {len} px exceeds the {h}x{w} field",
            group.row, group.col
        )));
    }
    let (bars, gaps) = group.profile_centers();
    let b = profile_samples(field, group, &bars);
    let g = profile_samples(field, group, &gaps);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let michelson = |hi: f64, lo: f64| {
        if hi + lo > 0.0 {
            ((hi - lo) / (hi + lo)).max(0.0)
        } else {
            0.0
        }
    };
    let c = michelson(min(&g), max(&b)).max(michelson(min(&b), max(&g)));
    if c == 0.0 {
        log::warn!("bar group at ({}, {}) has a degenerate profile", group.row, group.col);
    }
    Ok(c.min(1.0))
}

/// Path for [`phase_line_trace`], in meters (`x` along columns, `y` along
/// rows, origin at the center of pixel `(0, 0)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TracePath {
    Segment { start: [f64; 2], end: [f64; 2] },
    /// Counterclockwise in the `(x, y)` plane from `start_angle` to
    /// `end_angle` (radians).
    Arc {
        center: [f64; 2],
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl TracePath {
    pub fn length(&self) -> f64 {
        match *self {
            TracePath::Segment { start, end } => (end[0] - start[0]).hypot(end[1] - start[1]),
            TracePath::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle).abs(),
        }
    }

    /// Point at arclength fraction `t` in `[0, 1]`.
    pub fn point(&self, t: f64) -> [f64; 2] {
        match *self {
            TracePath::Segment { start, end } => [
                start[0] + t * (end[0] - start[0]),
                start[1] + t * (end[1] - start[1]),
            ],
            TracePath::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let a = start_angle + t * (end_angle - start_angle);
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }
}

/// Axis-aligned rectangle in meters: `[x0, y0, x1, y1]`.
pub type Region = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub arclength: f64,
    pub phase: f64,
}

/// Phase of the summed field over `region`, a global offset estimate that is
/// robust to wrapping.
pub fn background_phase(field: &ComplexField, region: Region) -> Result<f64> {
    let p = field.pixel_pitch();
    let (h, w) = field.dim();
    let [x0, y0, x1, y1] = region;
    let c0 = (x0 / p).ceil().max(0.0) as usize;
    let r0 = (y0 / p).ceil().max(0.0) as usize;
    let c1 = ((x1 / p).floor() as usize).min(w - 1);
    let r1 = ((y1 / p).floor() as usize).min(h - 1);
    if !(x0 < x1 && y0 < y1) || c0 > c1 || r0 > r1 || x0 < 0.0 || y0 < 0.0 {
        return Err(Error::OutOfBounds(format!("background region {region:?} selects no pixels")));
    }
    let sum: Complex64 = field.data().slice(ndarray::s![r0..=r1, c0..=c1]).sum();
    if sum.norm() == 0.0 {
        return Err(Error::Empty("background region carries no energy".into()));
    }
    Ok(sum.arg())
}

/// Unwrapped phase along `path` after removing the background phase.
///
/// The field is sampled every half pixel with bilinear interpolation of the
/// complex values; consecutive phases are unwrapped so that no step exceeds
/// pi.
pub fn phase_line_trace(field: &ComplexField, path: &TracePath, background: Region) -> Result<Vec<TracePoint>> {
    let p = field.pixel_pitch();
    let (h, w) = field.dim();
    let len = path.length();
    if !len.is_finite() {
        return Err(Error::Config("trace path must be finite".into()));
    }
    let n = ((2.0 * len / p).ceil() as usize).max(1) + 1;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let (xmax, ymax) = ((w - 1) as f64 * p, (h - 1) as f64 * p);
    for &t in &ts {
        let [x, y] = path.point(t);
        if !(0.0..=xmax).contains(&x) || !(0.0..=ymax).contains(&y) {
            return Err(Error::OutOfBounds(format!(
                "trace point ({x:.3e}, {y:.3e}) m lies outside the field"
            )));
        }
    }
    let offset = Complex64::from_polar(1.0, -background_phase(field, background)?);
    let mut out: Vec<TracePoint> = Vec::with_capacity(n);
    for &t in &ts {
        let [x, y] = path.point(t);
        let z = bilinear(field.data(), y / p, x / p) * offset;
        let mut phase = z.arg();
        if let Some(prev) = out.last() {
            phase += 2.0 * PI * ((prev.phase - phase) / (2.0 * PI)).round();
        }
        out.push(TracePoint {
            arclength: t * len,
            phase,
        });
    }
    Ok(out)
}

/// Height of a phase step given the index contrast of the material.
pub fn phase_to_height(phase: f64, wavelength: f64, index_contrast: f64) -> f64 {
    phase * wavelength / (2.0 * PI * index_contrast)
}

/// `|<a, b>| / (|a| |b|)`, invariant to a global phase on either input.
pub fn complex_correlation<'a>(
    a: impl IntoIterator<Item = &'a Complex64>,
    b: impl IntoIterator<Item = &'a Complex64>,
) -> f64 {
    let mut dot = Complex64::new(0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    for (x, y) in a.into_iter().zip(b) {
        dot += x * y.conj();
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot.norm() / (na * nb).sqrt()
}

/// Correlation of a recovered diffuser with the truth over the pixels seen by
/// at least one window of `scan`. The truth is re-expressed on `frame` first.
pub fn diffuser_correlation(
    recovered: &ComplexField,
    frame: &DiffuserFrame,
    truth: &ComplexField,
    truth_frame: &DiffuserFrame,
    scan: &ScanSequence,
) -> Result<f64> {
    if recovered.dim() != frame.dim() {
        return Err(Error::GridMismatch {
            expected: frame.dim(),
            found: recovered.dim(),
        });
    }
    if truth.dim() != truth_frame.dim() {
        return Err(Error::GridMismatch {
            expected: truth_frame.dim(),
            found: truth.dim(),
        });
    }
    let truth = truth_frame.transfer(truth.data(), frame);
    let coverage = frame.coverage(scan);
    let covered = |(i, _): &(usize, &Complex64)| coverage.as_slice().unwrap()[*i] > 0;
    let a = recovered.data().iter().enumerate().filter(covered).map(|(_, z)| z);
    let b = truth.iter().enumerate().filter(covered).map(|(_, z)| z);
    Ok(complex_correlation(a, b))
}

#[derive(Clone, Debug)]
pub struct Registration {
    /// `candidate` shifted by `shift` and multiplied by `exp(-i phase)`.
    pub field: ComplexField,
    /// Normalized correlation magnitude in `[0, 1]`.
    pub correlation: f64,
    /// Integer `(x, y)` shift applied to the candidate.
    pub shift: (i64, i64),
    /// Global phase of the candidate relative to the reference.
    pub phase: f64,
}

/// Registers `candidate` onto `reference` over integer circular shifts and a
/// global phase.
pub fn gauge_register(candidate: &ComplexField, reference: &ComplexField) -> Result<Registration> {
    candidate.ensure_same_grid(reference)?;
    let (ec, er) = (candidate.power(), reference.power());
    if ec == 0.0 || er == 0.0 {
        return Err(Error::Empty("registration input has zero energy".into()));
    }
    let (h, w) = candidate.dim();
    let fft = plan(h, w);
    let mut c = candidate.data().clone();
    let mut r = reference.data().clone();
    fft.forward(&mut c);
    fft.forward(&mut r);
    // xc[s] = sum_x candidate(x + s) conj(reference(x))
    let mut xc = &c * &r.mapv(|z| z.conj());
    fft.inverse(&mut xc);
    let mut best = (0usize, 0usize);
    let mut best_val = -1.0;
    for ((i, j), z) in xc.indexed_iter() {
        let v = z.norm_sqr();
        if v > best_val {
            best_val = v;
            best = (i, j);
        }
    }
    let signed = |i: usize, n: usize| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
    // moving the candidate by -s lines it up with the reference
    let shift = (-signed(best.1, w), -signed(best.0, h));
    let shifted = crate::field::shift_field(candidate, shift.0 as f64, shift.1 as f64);
    let dot: Complex64 = shifted
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| a * b.conj())
        .sum();
    let phase = dot.arg();
    let field = shifted.scale(Complex64::from_polar(1.0, -phase))?;
    let correlation = (dot.norm() / (ec * er).sqrt()).min(1.0);
    Ok(Registration {
        field,
        correlation,
        shift,
        phase,
    })
}
