use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RefocusStack;
use crate::error::{Error, Result};

/// A detected intensity minimum. `score` is the voxel intensity over the
/// stack median; lower is darker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticleLocalization {
    pub positions: Vec<Localization>,
}

impl ParticleLocalization {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Offsets of the 26-neighbourhood.
fn neighbours() -> impl Iterator<Item = (i64, i64, i64)> {
    (-1..=1).flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| (a, b, c))))
        .filter(|&o| o != (0, 0, 0))
}

struct Volume<'a> {
    data: &'a Array3<f64>,
    h: usize,
    w: usize,
}

impl Volume<'_> {
    /// Value at plane `k` and laterally wrapped `(r, c)`.
    fn at(&self, k: usize, r: i64, c: i64) -> f64 {
        let r = r.rem_euclid(self.h as i64) as usize;
        let c = c.rem_euclid(self.w as i64) as usize;
        self.data[[k, r, c]]
    }

    fn is_strict_minimum(&self, k: usize, r: usize, c: usize) -> bool {
        let v = self.data[[k, r, c]];
        neighbours().all(|(dk, dr, dc)| {
            v < self.at((k as i64 + dk) as usize, r as i64 + dr, c as i64 + dc)
        })
    }

    /// Least-squares quadratic over the 3x3x3 block around `(k, r, c)`.
    /// Returns the stationary point as `(dz, dy, dx)` in lattice units.
    fn refine(&self, k: usize, r: usize, c: usize) -> [f64; 3] {
        // the monomials 1, u, u^2 - 2/3, uv are orthogonal on {-1, 0, 1}^3,
        // so every coefficient is a plain projection
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for (dk, dr, dc) in neighbours().chain(std::iter::once((0, 0, 0))) {
            let v = self.at((k as i64 + dk) as usize, r as i64 + dr, c as i64 + dc);
            let u = [dk as f64, dr as f64, dc as f64];
            for a in 0..3 {
                g[a] += u[a] * v / 18.0;
                h[a][a] += (u[a] * u[a] - 2.0 / 3.0) * v / 6.0 * 2.0;
                for b in a + 1..3 {
                    let q = u[a] * u[b] * v / 12.0;
                    h[a][b] += q;
                    h[b][a] += q;
                }
            }
        }
        match solve3(h, g) {
            Some(x) if x.iter().all(|d| d.abs() <= 1.0) => x.map(|d| -d),
            // indefinite or far-reaching fits fall back to per-axis parabolas
            _ => {
                let mut out = [0.0; 3];
                for (a, slot) in out.iter_mut().enumerate() {
                    if h[a][a] > 0.0 {
                        *slot = (-g[a] / h[a][a]).clamp(-0.5, 0.5);
                    }
                }
                out
            }
        }
    }
}

/// Solves `h x = g` when `h` is positive definite.
fn solve3(h: [[f64; 3]; 3], g: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let minor2 = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let d = det(h);
    if !(h[0][0] > 0.0 && minor2 > 0.0 && d > 0.0) {
        return None;
    }
    let mut x = [0.0; 3];
    for (i, slot) in x.iter_mut().enumerate() {
        let mut m = h;
        for row in 0..3 {
            m[row][i] = g[row];
        }
        *slot = det(m) / d;
    }
    Some(x)
}

/// Finds particles as dark voxels of `|O_z|^2`.
///
/// A voxel on an interior plane is a candidate when it is strictly darker
/// than all 26 neighbours (lateral neighbours wrap, matching the periodic
/// propagation) and below `threshold` times the stack median. Candidates
/// whose lateral distance is under `min_separation` are merged, keeping the
/// darkest. Survivors are refined by a quadratic fit over their 3x3x3 block.
/// Output is sorted by score.
pub fn localize_minima(stack: &RefocusStack, min_separation: f64, threshold: f64) -> Result<ParticleLocalization> {
    if stack.is_empty() {
        return Err(Error::Empty("localization needs a non-empty stack".into()));
    }
    let pitch = stack.config.pixel_pitch;
    if !(min_separation >= 2.0 * pitch) {
        return Err(Error::Config(format!(
            "min_separation {min_separation:.3e} m is below two pixels ({:.3e} m)",
            2.0 * pitch
        )));
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::Config("localization threshold must be positive".into()));
    }
    let data = stack.intensity_volume();
    let (nz, h, w) = data.dim();
    let mut all: Vec<f64> = data.iter().copied().collect();
    let med = median(&mut all);
    if nz < 3 || med <= 0.0 {
        return Ok(ParticleLocalization::default());
    }
    let cut = threshold * med;
    let vol = Volume { data: &data, h, w };
    let mut candidates: Vec<(usize, usize, usize, f64)> = (1..nz - 1)
        .into_par_iter()
        .flat_map_iter(|k| {
            let vol = &vol;
            (0..h).flat_map(move |r| (0..w).map(move |c| (k, r, c))).filter_map(move |(k, r, c)| {
                let v = vol.data[[k, r, c]];
                (v < cut && vol.is_strict_minimum(k, r, c)).then_some((k, r, c, v))
            })
        })
        .collect();
    // darkest first; index order breaks ties so the merge is deterministic
    candidates.sort_by(|a, b| a.3.total_cmp(&b.3).then((a.0, a.1, a.2).cmp(&(b.0, b.1, b.2))));

    let z = stack.z_values();
    let (fh, fw) = (h as f64 * pitch, w as f64 * pitch);
    let wrapped = |d: f64, period: f64| {
        let d = d.rem_euclid(period);
        d.min(period - d)
    };
    let mut kept: Vec<Localization> = Vec::new();
    for (k, r, c, v) in candidates {
        let (y0, x0) = (r as f64 * pitch, c as f64 * pitch);
        if kept
            .iter()
            .any(|p| wrapped(p.x - x0, fw).hypot(wrapped(p.y - y0, fh)) < min_separation)
        {
            continue;
        }
        let [dz, dy, dx] = vol.refine(k, r, c);
        let step = if dz >= 0.0 { z[k + 1] - z[k] } else { z[k] - z[k - 1] };
        kept.push(Localization {
            x: ((c as f64 + dx) * pitch).rem_euclid(fw),
            y: ((r as f64 + dy) * pitch).rem_euclid(fh),
            z: z[k] + dz * step,
            score: v / med,
        });
    }
    Ok(ParticleLocalization { positions: kept })
}
