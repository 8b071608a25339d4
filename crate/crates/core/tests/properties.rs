mod common;

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use proptest::prelude::*;
use psm_core::analysis::{
    bar_contrast, gauge_register, localize_minima, phase_line_trace, refocus, RefocusStack, TracePath,
};
use psm_core::field::{angular_spectrum_transfer, defocus_ctf, forward_spectrum, inverse_spectrum, propagate, shift_field};
use psm_core::simulator::{bar_layout, forward_measure, make_target, NoiseSpec, Orientation, TargetSpec};
use psm_core::{ComplexField, OpticalConfig};

use common::{random_field, random_setup, small_config};

fn config(n: usize) -> OpticalConfig {
    small_config(n)
}

/// Random field restricted to the propagating disc, so propagation is
/// lossless on it.
fn band_limited(n: usize, seed: u64) -> ComplexField {
    let c = config(n);
    let f = random_field(n, n, c.pixel_pitch, seed);
    let mask = angular_spectrum_transfer(&c, 0.0).unwrap();
    inverse_spectrum(&forward_spectrum(&f).unwrap().mul(&mask).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_and_round_trip(h in 2usize..24, w in 2usize..24, seed in any::<u64>()) {
        let f = random_field(h, w, 1e-6, seed);
        let s = forward_spectrum(&f).unwrap();
        prop_assert!(rel(s.power(), f.power() * (h * w) as f64) < 1e-10);
        let back = inverse_spectrum(&s).unwrap();
        prop_assert!(back.max_abs_diff(&f) < 1e-12 * f.max_abs().max(1.0));
    }

    #[test]
    fn propagation_is_unitary_and_invertible(seed in any::<u64>(), d in -200e-6f64..200e-6) {
        let c = config(32);
        let f = band_limited(32, seed);
        let there = propagate(&f, &c, d).unwrap();
        prop_assert!(rel(there.power(), f.power()) < 1e-9);
        let back = propagate(&there, &c, -d).unwrap();
        prop_assert!(back.max_abs_diff(&f) < 1e-9 * f.max_abs());
    }

    #[test]
    fn transfers_compose(d1 in -300e-6f64..300e-6, d2 in -300e-6f64..300e-6) {
        let c = config(24);
        let a = angular_spectrum_transfer(&c, d1).unwrap();
        let b = angular_spectrum_transfer(&c, d2).unwrap();
        let ab = angular_spectrum_transfer(&c, d1 + d2).unwrap();
        let prod = a.mul(&b).unwrap();
        let inside = angular_spectrum_transfer(&c, 0.0).unwrap();
        for ((p, q), m) in prod.data().iter().zip(ab.data()).zip(inside.data()) {
            if m.norm() > 0.0 {
                prop_assert!((p - q).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn pupil_is_idempotent(seed in any::<u64>(), na in 0.05f64..0.5) {
        let c = OpticalConfig { objective_na: na, ..config(20) };
        let f = random_field(20, 20, c.pixel_pitch, seed);
        let p = defocus_ctf(&c, 0.0).unwrap();
        let once = forward_spectrum(&f).unwrap().mul(&p).unwrap();
        let twice = once.mul(&p).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn integer_shift_is_a_permutation(seed in any::<u64>(), dx in -40i64..40, dy in -40i64..40) {
        let (h, w) = (12usize, 17usize);
        let f = random_field(h, w, 1e-6, seed);
        let g = shift_field(&f, dx as f64, dy as f64);
        for r in 0..h {
            for c in 0..w {
                let (sr, sc) = ((r as i64 - dy).rem_euclid(h as i64) as usize, (c as i64 - dx).rem_euclid(w as i64) as usize);
                prop_assert_eq!(g.get(r, c), f.get(sr, sc));
            }
        }
    }

    #[test]
    fn measurements_respect_energy_bound(seed in 0u64..1000) {
        let c = config(16);
        let w = random_field(16, 16, c.pixel_pitch, seed);
        let (scan, _, d) = random_setup(&c, 5, seed);
        let set = forward_measure(&w, &d, &c, &scan, &NoiseSpec::noiseless()).unwrap();
        for img in &set.images {
            prop_assert!(img.sum() <= w.power() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn global_phase_gauge_leaves_measurements_unchanged(seed in 0u64..1000, theta in -PI..PI) {
        let c = config(16);
        let w = random_field(16, 16, c.pixel_pitch, seed);
        let (scan, _, d) = random_setup(&c, 4, seed);
        let rot = Complex64::from_polar(1.0, theta);
        let a = forward_measure(&w, &d, &c, &scan, &NoiseSpec::noiseless()).unwrap();
        let b = forward_measure(&w.scale(rot).unwrap(), &d.scale(rot.conj()).unwrap(), &c, &scan, &NoiseSpec::noiseless()).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            for (p, q) in x.iter().zip(y) {
                prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
            }
        }
    }

    #[test]
    fn refocus_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let c = config(16);
        let (w1, w2) = (random_field(16, 16, c.pixel_pitch, s1), random_field(16, 16, c.pixel_pitch, s2 + 7));
        let (ca, cb) = (Complex64::new(a, 0.5), Complex64::new(0.3, b));
        let mix = w1.scale(ca).unwrap().add(&w2.scale(cb).unwrap()).unwrap();
        let z = [-50e-6, 0.0, 80e-6];
        let (r, r1, r2) = (refocus(&mix, &c, &z).unwrap(), refocus(&w1, &c, &z).unwrap(), refocus(&w2, &c, &z).unwrap());
        for k in 0..z.len() {
            let expect = r1.planes[k].1.scale(ca).unwrap().add(&r2.planes[k].1.scale(cb).unwrap()).unwrap();
            prop_assert!(r.planes[k].1.max_abs_diff(&expect) < 1e-10);
        }
    }

    #[test]
    fn registration_is_gauge_invariant(seed in 0u64..1000, dx in -8i64..8, dy in -8i64..8, theta in -PI..PI) {
        let reference = random_field(16, 16, 1e-6, seed);
        let candidate = random_field(16, 16, 1e-6, seed + 1).add(&reference).unwrap();
        let base = gauge_register(&candidate, &reference).unwrap().correlation;
        let moved = shift_field(&candidate, dx as f64, dy as f64).scale(Complex64::from_polar(1.0, theta)).unwrap();
        let again = gauge_register(&moved, &reference).unwrap();
        prop_assert!((again.correlation - base).abs() < 1e-10);
    }

    #[test]
    fn phase_trace_ignores_global_phase(theta in -PI..PI) {
        let c = OpticalConfig { pixel_pitch: 1e-6, ..config(32) };
        let spec = TargetSpec::PhaseDisc { height: 1.0, discs: vec![psm_core::simulator::Disc { center_x: 16e-6, center_y: 16e-6, radius: 6e-6 }] };
        let f = make_target(&spec, &c).unwrap();
        let path = TracePath::Segment { start: [4e-6, 16e-6], end: [28e-6, 16e-6] };
        let bg = [0.0, 0.0, 6e-6, 6e-6];
        let a = phase_line_trace(&f, &path, bg).unwrap();
        let b = phase_line_trace(&f.scale(Complex64::from_polar(1.0, theta)).unwrap(), &path, bg).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p.phase - q.phase).abs() < 1e-9);
        }
    }

    #[test]
    fn bar_contrast_is_bounded_and_gauge_invariant(seed in 0u64..1000, theta in -PI..PI) {
        let c = OpticalConfig { pixel_pitch: 1e-6, ..config(64) };
        let groups = bar_layout(&[4e-6, 3e-6], None, Orientation::Vertical, &c).unwrap();
        let bars = make_target(&TargetSpec::UsafBars { linewidths: vec![4e-6, 3e-6], region: None, orientation: Orientation::Vertical }, &c).unwrap();
        let noisy = bars.add(&random_field(64, 64, 1e-6, seed).scale(Complex64::new(0.3, 0.0)).unwrap()).unwrap();
        let rotated = noisy.scale(Complex64::from_polar(1.0, theta)).unwrap();
        for g in &groups {
            let v = bar_contrast(&noisy, g).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((bar_contrast(&rotated, g).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn localization_is_shift_equivariant(dx in 0usize..24, dy in 0usize..24) {
        let n = 24;
        let mut vol = Array3::from_elem((5, n, n), 1.0);
        for (k, r, c, depth) in [(2usize, 6usize, 7usize, 0.6), (2, 15, 18, 0.8), (3, 5, 19, 0.5)] {
            for ((kk, rr, cc), v) in vol.indexed_iter_mut() {
                let wrap = |a: usize, b: usize| { let d = (a as i64 - b as i64).rem_euclid(n as i64); d.min(n as i64 - d) as f64 };
                let d2 = (kk as f64 - k as f64).powi(2) + wrap(rr, r).powi(2) + wrap(cc, c).powi(2);
                *v -= depth * (-d2 / 3.0).exp();
            }
        }
        let stack_of = |vol: &Array3<f64>| {
            let c = OpticalConfig { pixel_pitch: 1e-6, ..config(n) };
            let planes = (0..5).map(|k| (k as f64 * 1e-5, ComplexField::from_fn(n, n, 1e-6, |(r, cc)| Complex64::new(vol[[k, r, cc]].sqrt(), 0.0)).unwrap())).collect();
            RefocusStack { planes, config: c }
        };
        let moved = Array3::from_shape_fn((5, n, n), |(k, r, c)| vol[[k, (r + n - dy) % n, (c + n - dx) % n]]);
        let a = localize_minima(&stack_of(&vol), 3e-6, 0.9).unwrap();
        let b = localize_minima(&stack_of(&moved), 3e-6, 0.9).unwrap();
        prop_assert_eq!(a.len(), 3);
        prop_assert_eq!(a.len(), b.len());
        let fov = n as f64 * 1e-6;
        for (p, q) in a.positions.iter().zip(&b.positions) {
            let ex = (p.x + dx as f64 * 1e-6).rem_euclid(fov);
            let ey = (p.y + dy as f64 * 1e-6).rem_euclid(fov);
            let wrapped = |d: f64| { let d = d.rem_euclid(fov); d.min(fov - d) };
            prop_assert!(wrapped(q.x - ex) < 1e-9 && wrapped(q.y - ey) < 1e-9, "{:?} vs {:?}", p, q);
            prop_assert!((p.z - q.z).abs() < 1e-12);
        }
    }
}
