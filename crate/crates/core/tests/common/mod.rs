#![allow(dead_code)]

use num_complex::Complex64;
use psm_core::simulator::{make_scan, DiffuserFrame, ScanSequence};
use psm_core::{ComplexField, OpticalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MARGIN: usize = 2;

/// Small grid whose every sample is propagating: the corner frequency is
/// below `1 / lambda`.
pub fn small_config(n: usize) -> OpticalConfig {
    OpticalConfig {
        wavelength: 532e-9,
        objective_na: 0.25,
        diffuser_distance: 30e-6,
        pixel_pitch: 0.5e-6,
        grid_height: n,
        grid_width: n,
    }
}

pub fn random_field(h: usize, w: usize, pitch: f64, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexField::from_fn(h, w, pitch, |_| {
        Complex64::new(rng.random_range(0.2..1.0), rng.random_range(-0.5..0.5))
    })
    .unwrap()
}

pub fn random_phase(h: usize, w: usize, pitch: f64, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexField::from_fn(h, w, pitch, |_| Complex64::from_polar(1.0, rng.random_range(-3.0..3.0)))
        .unwrap()
}

/// Scan, frame and a random phase diffuser on that frame.
pub fn random_setup(
    config: &OpticalConfig,
    count: usize,
    seed: u64,
) -> (ScanSequence, DiffuserFrame, ComplexField) {
    let scan = make_scan(count, (1, 3), seed).unwrap();
    let frame = DiffuserFrame::for_scan(config.dim(), &scan, MARGIN);
    let (h, w) = frame.dim();
    let d = random_phase(h, w, config.pixel_pitch, seed + 1000);
    (scan, frame, d)
}

/// Magnitude of the normalized inner product, invariant to a global phase.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut dot = Complex64::new(0.0, 0.0);
    let (mut na, mut nb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y.conj();
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    dot.norm() / (na * nb).sqrt()
}
