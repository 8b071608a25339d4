use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{shift_field, ComplexField, OpticalConfig};

/// Ordered lateral diffuser shifts `(x_j, y_j)` in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScanSequence {
    shifts: Vec<[f64; 2]>,
}

/// Bounding box of a scan, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanExtent {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl ScanExtent {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

impl ScanSequence {
    pub fn new(shifts: Vec<[f64; 2]>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::Empty("scan sequence has no positions".into()));
        }
        if shifts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("scan shifts must be finite".into()));
        }
        if shifts.len() > 1 && shifts.iter().all(|s| *s == shifts[0]) {
            return Err(Error::Config("scan positions are all identical".into()));
        }
        Ok(Self { shifts })
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn shifts(&self) -> &[[f64; 2]] {
        &self.shifts
    }

    pub fn get(&self, j: usize) -> (f64, f64) {
        let [x, y] = self.shifts[j];
        (x, y)
    }

    /// The first `k` positions.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        Self::new(self.shifts[..k.min(self.len())].to_vec())
    }

    pub fn is_integer(&self) -> bool {
        self.shifts.iter().flatten().all(|v| v.fract() == 0.0)
    }

    pub fn extent(&self) -> ScanExtent {
        let mut e = ScanExtent {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &[x, y] in &self.shifts {
            e.min_x = e.min_x.min(x);
            e.max_x = e.max_x.max(x);
            e.min_y = e.min_y.min(y);
            e.max_y = e.max_y.max(y);
        }
        e
    }

    /// Per-axis magnitudes of adjacent steps.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        self.shifts
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).abs(), (w[1][1] - w[0][1]).abs()))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.shifts.iter().map(|[x, y]| [x * factor, y * factor]).collect())
    }
}

/// Random-walk scan starting at the origin. Each step moves both axes by an
/// integer magnitude drawn uniformly from `[min_step, max_step]` with a
/// random sign.
pub fn make_scan(count: usize, step_range: (u32, u32), seed: u64) -> Result<ScanSequence> {
    let (lo, hi) = step_range;
    if count == 0 {
        return Err(Error::Config("scan count must be at least 1".into()));
    }
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!(
            "scan step range must satisfy 0 < min <= max, got ({lo}, {hi})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifts = Vec::with_capacity(count);
    let (mut x, mut y) = (0i64, 0i64);
    shifts.push([0.0, 0.0]);
    for _ in 1..count {
        for axis in [&mut x, &mut y] {
            let step = rng.random_range(lo..=hi) as i64;
            *axis += if rng.random_bool(0.5) { step } else { -step };
        }
        shifts.push([x as f64, y as f64]);
    }
    ScanSequence::new(shifts)
}

/// Geometry of the extended diffuser grid.
///
/// The diffuser is stored on a grid larger than the object grid so that every
/// scan position sees a cropped window of it without periodic wrap. The
/// object origin sits at `(origin_row, origin_col)` of the extended grid when
/// the shift is zero; a shift `(x, y)` moves the window to
/// `(origin_row - y, origin_col - x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffuserFrame {
    pub object_height: usize,
    pub object_width: usize,
    pub origin_row: usize,
    pub origin_col: usize,
    pub height: usize,
    pub width: usize,
}

pub const DEFAULT_DIFFUSER_MARGIN: usize = 2;

impl DiffuserFrame {
    pub fn for_scan(object: (usize, usize), scan: &ScanSequence, margin: usize) -> Self {
        let e = scan.extent();
        let origin_row = e.max_y.ceil() as i64 + margin as i64;
        let origin_col = e.max_x.ceil() as i64 + margin as i64;
        let height = object.0 as i64 + origin_row - e.min_y.floor() as i64 + margin as i64;
        let width = object.1 as i64 + origin_col - e.min_x.floor() as i64 + margin as i64;
        // origin >= margin > shift, so the frame always contains the object window
        Self {
            object_height: object.0,
            object_width: object.1,
            origin_row: origin_row.max(0) as usize,
            origin_col: origin_col.max(0) as usize,
            height: height as usize,
            width: width as usize,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Optical config describing the extended grid.
    pub fn config(&self, object: &OpticalConfig) -> OpticalConfig {
        object.with_grid(self.height, self.width)
    }

    fn split(&self, shift: (f64, f64)) -> ((usize, usize), (f64, f64)) {
        let (x, y) = shift;
        let (xi, yi) = (x.floor(), y.floor());
        let row = self.origin_row as i64 - yi as i64;
        let col = self.origin_col as i64 - xi as i64;
        assert!(
            row >= 0
                && col >= 0
                && row as usize + self.object_height <= self.height
                && col as usize + self.object_width <= self.width,
            "shift ({x}, {y}) falls outside the diffuser frame"
        );
        ((row as usize, col as usize), (x - xi, y - yi))
    }

    /// Top-left corner of the window seen at `shift` (integer part only).
    pub fn window_origin(&self, shift: (f64, f64)) -> (usize, usize) {
        self.split(shift).0
    }

    /// The shifted diffuser `D(x - x_j, y - y_j)` on the object grid.
    pub fn window(&self, diffuser: &Array2<Complex64>, shift: (f64, f64)) -> Array2<Complex64> {
        assert_eq!(diffuser.dim(), self.dim(), "diffuser does not match frame");
        let ((r, c), (fx, fy)) = self.split(shift);
        let (h, w) = (self.object_height, self.object_width);
        if fx == 0.0 && fy == 0.0 {
            return diffuser.slice(s![r..r + h, c..c + w]).to_owned();
        }
        let shifted = shift_field(&ComplexField::from_parts(diffuser.clone(), 1.0), fx, fy);
        shifted.data().slice(s![r..r + h, c..c + w]).to_owned()
    }

    /// Writes an updated window back: the inverse of [`DiffuserFrame::window`].
    ///
    /// `original` is the window before the update; for integer shifts the new
    /// window is pasted verbatim, for fractional shifts the change is shifted
    /// back spectrally and added.
    pub fn write_back(
        &self,
        diffuser: &mut Array2<Complex64>,
        original: &Array2<Complex64>,
        updated: &Array2<Complex64>,
        shift: (f64, f64),
    ) {
        let ((r, c), (fx, fy)) = self.split(shift);
        let (h, w) = (self.object_height, self.object_width);
        if fx == 0.0 && fy == 0.0 {
            diffuser.slice_mut(s![r..r + h, c..c + w]).assign(updated);
            return;
        }
        let mut delta = Array2::zeros(self.dim());
        delta
            .slice_mut(s![r..r + h, c..c + w])
            .assign(&(updated - original));
        let back = shift_field(&ComplexField::from_parts(delta, 1.0), -fx, -fy);
        *diffuser += back.data();
    }

    /// Re-expresses a diffuser stored on `self` on the grid of `target`,
    /// keeping the object origin fixed. Pixels not covered by `self` are set
    /// to one.
    pub fn transfer(&self, diffuser: &Array2<Complex64>, target: &DiffuserFrame) -> Array2<Complex64> {
        assert_eq!(diffuser.dim(), self.dim(), "diffuser does not match frame");
        let dr = self.origin_row as i64 - target.origin_row as i64;
        let dc = self.origin_col as i64 - target.origin_col as i64;
        Array2::from_shape_fn(target.dim(), |(r, c)| {
            let sr = r as i64 + dr;
            let sc = c as i64 + dc;
            if sr >= 0 && sc >= 0 && (sr as usize) < self.height && (sc as usize) < self.width {
                diffuser[[sr as usize, sc as usize]]
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
    }

    /// Number of scan windows covering each extended-grid pixel.
    pub fn coverage(&self, scan: &ScanSequence) -> Array2<u32> {
        let mut counts = Array2::zeros(self.dim());
        for j in 0..scan.len() {
            let (r, c) = self.window_origin(scan.get(j));
            counts
                .slice_mut(s![r..r + self.object_height, c..c + self.object_width])
                .mapv_inplace(|v: u32| v + 1);
        }
        counts
    }
}
