use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{propagate, ComplexField, OpticalConfig};

/// Bars run along y (`Vertical`, profile taken along x) or along x.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Vertical,
    Horizontal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

/// An absorbing sphere; `depth` is measured from the exit face into the
/// sample (positive values lie upstream).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub radius: f64,
}

/// Ground-truth sample description. All lengths in meters, phases in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Opaque three-bar groups on a clear background, one group per
    /// half-pitch linewidth, shelf-packed into `region` (fractions
    /// `[x0, y0, x1, y1]` of the grid).
    UsafBars {
        linewidths: Vec<f64>,
        #[serde(default)]
        region: Option<[f64; 4]>,
        #[serde(default)]
        orientation: Orientation,
    },
    /// Unit-amplitude field with phase `height` inside the discs.
    PhaseDisc { height: f64, discs: Vec<Disc> },
    /// Two thin layers; `first` lies `gap` upstream of `second`, whose exit
    /// face is the output plane.
    TwoLayer {
        first: Box<TargetSpec>,
        second: Box<TargetSpec>,
        gap: f64,
    },
    /// Absorbing, weakly refracting spheres in a slab of `thickness`,
    /// evaluated with the multi-slice model.
    SphereVolume {
        spheres: Vec<Sphere>,
        thickness: f64,
        slice_thickness: f64,
        index_contrast: f64,
        absorption: f64,
    },
}

impl TargetSpec {
    pub fn is_thin(&self) -> bool {
        matches!(self, TargetSpec::UsafBars { .. } | TargetSpec::PhaseDisc { .. })
    }
}

/// Placement of one three-bar group on the pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarGroup {
    /// Top-left corner of the 5w x 5w footprint.
    pub row: usize,
    pub col: usize,
    pub linewidth_px: usize,
    pub orientation: Orientation,
    /// Rendered half-pitch linewidth in meters (`linewidth_px * pitch`).
    pub linewidth: f64,
}

impl BarGroup {
    pub fn footprint(&self) -> usize {
        5 * self.linewidth_px
    }

    /// Half-open pixel rectangles `(row0, row1, col0, col1)` of the bars.
    pub fn bars(&self) -> [(usize, usize, usize, usize); 3] {
        let w = self.linewidth_px;
        let len = self.footprint();
        let mut out = [(0, 0, 0, 0); 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let start = 2 * k * w;
            *slot = match self.orientation {
                Orientation::Vertical => {
                    (self.row, self.row + len, self.col + start, self.col + start + w)
                }
                Orientation::Horizontal => {
                    (self.row + start, self.row + start + w, self.col, self.col + len)
                }
            };
        }
        out
    }

    /// Profile-axis coordinates (pixels, fractional) of bar and gap centers.
    pub fn profile_centers(&self) -> ([f64; 3], [f64; 2]) {
        let w = self.linewidth_px as f64;
        let origin = match self.orientation {
            Orientation::Vertical => self.col as f64,
            Orientation::Horizontal => self.row as f64,
        };
        let center = |k: f64| origin + k * w + (w - 1.0) / 2.0;
        ([center(0.0), center(2.0), center(4.0)], [center(1.0), center(3.0)])
    }
}

fn linewidth_px(linewidth: f64, config: &OpticalConfig) -> Result<usize> {
    if !(linewidth.is_finite() && linewidth > 0.0) {
        return Err(Error::Config(format!("bar linewidth {linewidth} must be positive")));
    }
    if linewidth < 2.0 * config.pixel_pitch {
        return Err(Error::Config(format!(
            "bar linewidth {:.3e} m is below two pixels ({:.3e} m)",
            linewidth,
            2.0 * config.pixel_pitch
        )));
    }
    Ok(((linewidth / config.pixel_pitch).round() as usize).max(2))
}

const DEFAULT_REGION: [f64; 4] = [0.1, 0.1, 0.9, 0.9];

/// Shelf-packs one three-bar group per linewidth, in the given order, into
/// the region. Adjacent groups are separated by the larger linewidth.
pub fn bar_layout(
    linewidths: &[f64],
    region: Option<[f64; 4]>,
    orientation: Orientation,
    config: &OpticalConfig,
) -> Result<Vec<BarGroup>> {
    let [fx0, fy0, fx1, fy1] = region.unwrap_or(DEFAULT_REGION);
    if !(0.0 <= fx0 && fx0 < fx1 && fx1 <= 1.0 && 0.0 <= fy0 && fy0 < fy1 && fy1 <= 1.0) {
        return Err(Error::Config(format!("invalid bar region {:?}", [fx0, fy0, fx1, fy1])));
    }
    let (h, w) = config.dim();
    let x0 = (fx0 * w as f64).ceil() as usize;
    let x1 = (fx1 * w as f64).floor() as usize;
    let y0 = (fy0 * h as f64).ceil() as usize;
    let y1 = (fy1 * h as f64).floor() as usize;

    let mut groups = Vec::with_capacity(linewidths.len());
    let (mut x, mut y) = (x0, y0);
    let mut shelf_height = 0usize;
    let mut shelf_gap = 0usize;
    let mut prev_lw = 0usize;
    for &lw in linewidths {
        let px = linewidth_px(lw, config)?;
        let size = 5 * px;
        let gap = if x == x0 { 0 } else { px.max(prev_lw).max(3) };
        if x + gap + size > x1 && x != x0 {
            y += shelf_height + shelf_gap.max(3);
            x = x0;
            shelf_height = 0;
            shelf_gap = 0;
        }
        let gap = if x == x0 { 0 } else { gap };
        if x + gap + size > x1 || y + size > y1 {
            return Err(Error::Config(format!(
                "bar groups do not fit in the {}x{} grid region",
                h, w
            )));
        }
        groups.push(BarGroup {
            row: y,
            col: x + gap,
            linewidth_px: px,
            orientation,
            linewidth: px as f64 * config.pixel_pitch,
        });
        x += gap + size;
        shelf_height = shelf_height.max(size);
        shelf_gap = shelf_gap.max(px);
        prev_lw = px;
    }
    Ok(groups)
}

/// Renders a thin target.
pub fn make_target(spec: &TargetSpec, config: &OpticalConfig) -> Result<ComplexField> {
    config.validate()?;
    let (h, w) = config.dim();
    let p = config.pixel_pitch;
    match spec {
        TargetSpec::UsafBars {
            linewidths,
            region,
            orientation,
        } => {
            let mut data = Array2::from_elem((h, w), Complex64::new(1.0, 0.0));
            for g in bar_layout(linewidths, *region, *orientation, config)? {
                for (r0, r1, c0, c1) in g.bars() {
                    for r in r0..r1 {
                        for c in c0..c1 {
                            data[[r, c]] = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
            ComplexField::new(data, p)
        }
        TargetSpec::PhaseDisc { height, discs } => {
            if !height.is_finite() {
                return Err(Error::Config("disc phase height must be finite".into()));
            }
            for d in discs {
                if !(d.radius > 0.0) {
                    return Err(Error::Config("disc radius must be positive".into()));
                }
                if d.radius < 2.0 * p {
                    return Err(Error::Config(format!(
                        "disc radius {:.3e} m is below two pixels",
                        d.radius
                    )));
                }
            }
            let phase = Array2::from_shape_fn((h, w), |(r, c)| {
                let (y, x) = (r as f64 * p, c as f64 * p);
                let inside = discs.iter().any(|d| {
                    let (dx, dy) = (x - d.center_x, y - d.center_y);
                    dx * dx + dy * dy <= d.radius * d.radius
                });
                if inside {
                    *height
                } else {
                    0.0
                }
            });
            ComplexField::from_phase(&phase, p)
        }
        _ => Err(Error::Config(
            "thick targets have no single transmission; use synthesize_exit_wave".into(),
        )),
    }
}

/// Exit wavefront of the sample under unit plane-wave illumination.
pub fn synthesize_exit_wave(spec: &TargetSpec, config: &OpticalConfig) -> Result<ComplexField> {
    match spec {
        TargetSpec::UsafBars { .. } | TargetSpec::PhaseDisc { .. } => make_target(spec, config),
        TargetSpec::TwoLayer { first, second, gap } => {
            if !first.is_thin() || !second.is_thin() {
                return Err(Error::Config("two-layer targets must be built from thin layers".into()));
            }
            if !(gap.is_finite() && *gap > 0.0) {
                return Err(Error::Config("layer gap must be positive".into()));
            }
            let t1 = make_target(first, config)?;
            let t2 = make_target(second, config)?;
            let at_second = propagate(&t1, config, *gap)?;
            propagate(&t2.mul(&at_second)?, config, 0.0)
        }
        TargetSpec::SphereVolume {
            spheres,
            thickness,
            slice_thickness,
            index_contrast,
            absorption,
        } => multislice(spheres, *thickness, *slice_thickness, *index_contrast, *absorption, config),
    }
}

fn multislice(
    spheres: &[Sphere],
    thickness: f64,
    dz: f64,
    index_contrast: f64,
    absorption: f64,
    config: &OpticalConfig,
) -> Result<ComplexField> {
    config.validate()?;
    if !(thickness > 0.0 && dz > 0.0 && dz <= thickness) {
        return Err(Error::Config("volume thickness and slice thickness must be positive".into()));
    }
    if !(index_contrast.is_finite() && absorption.is_finite() && absorption >= 0.0) {
        return Err(Error::Config("sphere index contrast/absorption invalid".into()));
    }
    for s in spheres {
        if !(s.radius > 0.0 && s.depth - s.radius >= 0.0 && s.depth + s.radius <= thickness) {
            return Err(Error::Config(format!("sphere {s:?} does not fit inside the volume")));
        }
    }
    let (h, w) = config.dim();
    let p = config.pixel_pitch;
    if spheres.is_empty() {
        return ComplexField::ones(h, w, p);
    }
    let k = config.wavenumber();
    let slices = (thickness / dz).ceil() as usize;
    let mut field: Option<ComplexField> = None;
    // distance the field still has to travel before the next screen
    let mut pending = 0.0;
    for n in 0..slices {
        // slice n spans depths [top, top + dz] counted from the deep side
        let bottom = thickness - n as f64 * dz;
        let top = (bottom - dz).max(0.0);
        let mid = 0.5 * (top + bottom);
        let mut path = Array2::<f64>::zeros((h, w));
        let mut touched = false;
        for s in spheres {
            if s.depth + s.radius < top || s.depth - s.radius > bottom {
                continue;
            }
            let reach = (s.radius / p).ceil() as i64 + 1;
            let (cr, cc) = ((s.y / p).round() as i64, (s.x / p).round() as i64);
            for r in cr - reach..=cr + reach {
                for c in cc - reach..=cc + reach {
                    let dy = r as f64 * p - s.y;
                    let dx = c as f64 * p - s.x;
                    let rho2 = dx * dx + dy * dy;
                    if rho2 >= s.radius * s.radius {
                        continue;
                    }
                    let half = (s.radius * s.radius - rho2).sqrt();
                    let overlap = (s.depth + half).min(bottom) - (s.depth - half).max(top);
                    if overlap > 0.0 {
                        let rr = r.rem_euclid(h as i64) as usize;
                        let ccw = c.rem_euclid(w as i64) as usize;
                        path[[rr, ccw]] += overlap;
                        touched = true;
                    }
                }
            }
        }
        let screen_at = mid;
        if touched {
            let screen = path.mapv(|l| {
                Complex64::new(-k * absorption * l, k * index_contrast * l).exp()
            });
            let next = match field.take() {
                None => ComplexField::new(screen, p)?,
                Some(f) => {
                    let moved = carrier_free_propagate(&f, config, pending)?;
                    ComplexField::new(moved.data() * &screen, p)?
                }
            };
            field = Some(next);
            pending = 0.0;
        }
        // advance from this slice's screen plane to the next slice's screen plane
        let next_mid = if n + 1 < slices {
            let nb = thickness - (n + 1) as f64 * dz;
            0.5 * ((nb - dz).max(0.0) + nb)
        } else {
            0.0
        };
        if field.is_some() {
            pending += screen_at - next_mid;
        }
    }
    let f = field.expect("non-empty sphere list touches at least one slice");
    carrier_free_propagate(&f, config, pending)
}

/// Propagation with the plane-wave carrier `exp(i k z)` removed.
fn carrier_free_propagate(f: &ComplexField, config: &OpticalConfig, distance: f64) -> Result<ComplexField> {
    let moved = propagate(f, config, distance)?;
    moved.scale(Complex64::from_polar(1.0, -config.wavenumber() * distance))
}

/// Draws `count` spheres of `radius` with random lateral positions inside the
/// central 80% of the grid and depths spread over the slab, keeping lateral
/// centers at least `min_lateral` apart.
pub fn random_spheres(
    count: usize,
    radius: f64,
    thickness: f64,
    min_lateral: f64,
    config: &OpticalConfig,
    seed: u64,
) -> Result<Vec<Sphere>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fh, fw) = config.field_of_view();
    let lo_depth = radius + 0.05 * thickness;
    let hi_depth = thickness - radius - 0.05 * thickness;
    if hi_depth <= lo_depth {
        return Err(Error::Config("slab too thin for the requested spheres".into()));
    }
    let mut out: Vec<Sphere> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "could not place {count} spheres with lateral separation {min_lateral:.3e} m"
            )));
        }
        let x = rng.random_range(0.1 * fw..0.9 * fw);
        let y = rng.random_range(0.1 * fh..0.9 * fh);
        if out
            .iter()
            .any(|s| (s.x - x).hypot(s.y - y) < min_lateral)
        {
            continue;
        }
        // stratify depths so the volume is sampled end to end
        let band = (hi_depth - lo_depth) / count as f64;
        let depth = lo_depth + band * (out.len() as f64 + rng.random_range(0.0..1.0));
        out.push(Sphere { x, y, depth, radius });
    }
    Ok(out)
}

/// Phase of a plane wave after a disc of index contrast `dn` and thickness `t`.
pub fn phase_delay(wavelength: f64, index_contrast: f64, thickness: f64) -> f64 {
    2.0 * PI * index_contrast * thickness / wavelength
}
