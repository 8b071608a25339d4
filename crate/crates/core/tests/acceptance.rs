//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use psm_core::analysis::{
    bar_contrast, complex_correlation, diffuser_correlation, gauge_register, localize_minima, phase_line_trace,
    refocus, TracePath,
};
use psm_core::field::{angular_spectrum_transfer, forward_spectrum, inverse_spectrum, propagate, shift_field};
use psm_core::io::{write_dataset, DatasetExtras};
use psm_core::simulator::{
    bar_layout, forward_measure, make_diffuser, make_scan, random_spheres, synthesize_exit_wave, BarGroup, DiffuserFrame,
    DiffuserKind, DiffuserSpec, Disc, MeasurementSet, NoiseSpec, Orientation, ScanSequence, TargetSpec,
};
use psm_core::solver::{inner_update, solve, solve_with, DiffuserUpdate, SolveInit, SolverParams};
use psm_core::{ComplexField, OpticalConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_field, random_phase, small_config};

const WAVELENGTH: f64 = 532e-9;
const OBJECTIVE_NA: f64 = 0.055;
const RESOLVED: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Optics shared by the closed-loop scenes: the grid samples the objective
/// passband plus a diffuser of spectral NA 0.22.
fn scene_config(n: usize, pitch: f64) -> OpticalConfig {
    OpticalConfig {
        wavelength: WAVELENGTH,
        objective_na: OBJECTIVE_NA,
        diffuser_distance: 500e-6,
        pixel_pitch: pitch,
        grid_height: n,
        grid_width: n,
    }
}

fn diffuser_spec(depth: f64) -> DiffuserSpec {
    DiffuserSpec {
        kind: DiffuserKind::RandomPhaseSmooth,
        feature_size: 1.2e-6,
        phase_depth: depth,
        fill_fraction: 0.5,
        seed: 3,
    }
}

struct Scene {
    w: ComplexField,
    d: ComplexField,
    frame: DiffuserFrame,
    set: MeasurementSet,
}

fn scene(w: ComplexField, config: OpticalConfig, count: usize, depth: f64, noise: &NoiseSpec) -> Scene {
    let scan = make_scan(count, (2, 4), 1).unwrap();
    let frame = DiffuserFrame::for_scan(config.dim(), &scan, 2);
    let d = make_diffuser(&diffuser_spec(depth), &frame.config(&config)).unwrap();
    let set = forward_measure(&w, &d, &config, &scan, noise).unwrap();
    Scene { w, d, frame, set }
}

/// Smooth random complex object: amplitude in [0.2, 1], phase within
/// +-1.5 rad, spectrum confined to `na`.
fn smooth_object(config: &OpticalConfig, na: f64, seed: u64) -> ComplexField {
    let (h, w) = config.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ComplexField::from_fn(h, w, config.pixel_pitch, |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
    .unwrap();
    let spectrum = forward_spectrum(&noise).unwrap();
    let cut = na / config.wavelength;
    let (fh, fw) = config.field_of_view();
    let kept = ComplexField::from_fn(h, w, config.pixel_pitch, |(i, j)| {
        let fy = (i as f64 - (h / 2) as f64) / fh;
        let fx = (j as f64 - (w / 2) as f64) / fw;
        if fx.hypot(fy) <= cut {
            spectrum.get(i, j)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .unwrap();
    let raw = inverse_spectrum(&kept).unwrap();
    let peak = raw.max_abs();
    raw.map(|z| Complex64::from_polar(0.6 + 0.4 * z.re / peak, 1.5 * z.im / peak)).unwrap()
}

// ---- 1: forward model against a direct double-sum DFT ------------------------

/// `exp(sign 2 pi i k / n)` for every `k mod n`.
fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64)).collect()
}

/// Direct DFT with a centered spectrum: spectral index `u` is frequency
/// `u - n/2`.
fn dft(f: &Array2<Complex64>, inverse: bool) -> Array2<Complex64> {
    let (h, w) = f.dim();
    let sign = if inverse { 1.0 } else { -1.0 };
    let (th, tw) = (twiddles(h, sign), twiddles(w, sign));
    let mut out = Array2::zeros((h, w));
    for a in 0..h {
        for b in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..h {
                for y in 0..w {
                    // the frequency index is the output in the forward
                    // transform and the input in the inverse one
                    let (fu, fv, sx, sy) = if inverse { (x, y, a, b) } else { (a, b, x, y) };
                    let ku = (fu as i64 - (h / 2) as i64).rem_euclid(h as i64) as usize;
                    let kv = (fv as i64 - (w / 2) as i64).rem_euclid(w as i64) as usize;
                    acc += f[[x, y]] * th[(ku * sx) % h] * tw[(kv * sy) % w];
                }
            }
            out[[a, b]] = if inverse { acc / (h * w) as f64 } else { acc };
        }
    }
    out
}

fn kz(config: &OpticalConfig, u: usize, v: usize) -> Option<(f64, f64)> {
    let (h, w) = config.dim();
    let p = config.pixel_pitch;
    let ky = 2.0 * PI * (u as f64 - (h / 2) as f64) / (h as f64 * p);
    let kx = 2.0 * PI * (v as f64 - (w / 2) as f64) / (w as f64 * p);
    let k = 2.0 * PI / config.wavelength;
    let q = k * k - kx * kx - ky * ky;
    (q >= 0.0).then(|| (q.sqrt(), kx.hypot(ky)))
}

fn oracle_images(w: &Array2<Complex64>, d: &Array2<Complex64>, frame: &DiffuserFrame, config: &OpticalConfig, scan: &ScanSequence) -> Vec<Array2<f64>> {
    let dist = config.diffuser_distance;
    let cutoff = 2.0 * PI * config.objective_na / config.wavelength;
    let mut s = dft(w, false);
    for ((u, v), x) in s.indexed_iter_mut() {
        *x *= kz(config, u, v).map_or(Complex64::new(0.0, 0.0), |(kz, _)| Complex64::from_polar(1.0, dist * kz));
    }
    let at_diffuser = dft(&s, true);
    let (h, wd) = config.dim();
    (0..scan.len())
        .map(|j| {
            let (x, y) = scan.get(j);
            let (xs, ys) = (x as i64, y as i64);
            let modulated = Array2::from_shape_fn((h, wd), |(r, c)| {
                let dr = (frame.origin_row as i64 + r as i64 - ys) as usize;
                let dc = (frame.origin_col as i64 + c as i64 - xs) as usize;
                at_diffuser[[r, c]] * d[[dr, dc]]
            });
            let mut s = dft(&modulated, false);
            for ((u, v), x) in s.indexed_iter_mut() {
                *x *= match kz(config, u, v) {
                    Some((kz, r)) if r <= cutoff => Complex64::from_polar(1.0, -dist * kz),
                    _ => Complex64::new(0.0, 0.0),
                };
            }
            dft(&s, true).mapv(|z| z.norm_sqr())
        })
        .collect()
}

fn criterion_forward_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for draw in 0..20u64 {
        let config = OpticalConfig {
            objective_na: rng.random_range(0.05..0.5),
            diffuser_distance: rng.random_range(5e-6..500e-6),
            ..small_config(32)
        };
        let scan = make_scan(3, (1, 3), draw).unwrap();
        let frame = DiffuserFrame::for_scan(config.dim(), &scan, 2);
        let w = random_field(32, 32, config.pixel_pitch, 100 + draw);
        let (fh, fw) = frame.dim();
        let d = random_field(fh, fw, config.pixel_pitch, 200 + draw)
            .mul(&random_phase(fh, fw, config.pixel_pitch, 300 + draw))
            .unwrap();
        let set = forward_measure(&w, &d, &config, &scan, &NoiseSpec::noiseless()).unwrap();
        let expect = oracle_images(w.data(), d.data(), &frame, &config, &scan);
        for (a, b) in set.images.iter().zip(&expect) {
            let peak = b.iter().copied().fold(0.0, f64::max);
            let err = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            worst = worst.max(err / peak);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 10.0,
        format!("max relative error {worst:.2e} over 20 draws (< 1e-8), {secs:.1} s (< 10 s)"),
    )
}

// ---- 2: truth is a fixed point of one sweep -----------------------------------

fn criterion_fixed_point() -> Outcome {
    let start = Instant::now();
    let config = small_config(64);
    let scan = make_scan(16, (1, 3), 7).unwrap();
    let frame = DiffuserFrame::for_scan(config.dim(), &scan, 2);
    let (fh, fw) = frame.dim();
    let w = random_field(64, 64, config.pixel_pitch, 8);
    let d = random_phase(fh, fw, config.pixel_pitch, 9);
    let set = forward_measure(&w, &d, &config, &scan, &NoiseSpec::noiseless()).unwrap();
    let mut worst: f64 = 0.0;
    for update in [DiffuserUpdate::Corrected, DiffuserUpdate::AsPrinted] {
        let params = SolverParams { diffuser_update: update, ..SolverParams::default().with_iterations(1) };
        let init = SolveInit { wavefront: Some(w.clone()), diffuser: Some((d.clone(), frame)) };
        let r = solve_with(&set, &params, init).unwrap();
        worst = worst.max(r.wavefront.max_abs_diff(&w)).max(r.diffuser.max_abs_diff(&d));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 5.0,
        format!("max change {worst:.2e} with both diffuser updates (< 1e-10), {secs:.1} s (< 5 s)"),
    )
}

// ---- 3: closed-loop recovery -------------------------------------------------

fn criterion_closed_loop() -> Outcome {
    let config = scene_config(256, 0.887e-6);
    let w = smooth_object(&config, 0.1, 5);
    let s = scene(w, config, 100, 2.0, &NoiseSpec::noiseless());
    let start = Instant::now();
    let r = solve(&s.set, &SolverParams::default().with_iterations(50)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let reg = gauge_register(&r.wavefront, &s.w).unwrap();
    let cd = diffuser_correlation(&r.diffuser, &r.frame, &s.d, &s.frame, &s.set.scan).unwrap();
    outcome(
        reg.correlation > 0.97 && cd > 0.95 && secs < 300.0,
        format!(
            "W correlation {:.4} (> 0.97), D correlation {cd:.4} (> 0.95), {secs:.1} s (< 300 s)",
            reg.correlation
        ),
    )
}

// ---- 4 and 5: resolution target ------------------------------------------------

/// Bars from the diffraction limit down to a sixth of it, sampled at 18
/// pixels per limit.
struct BarScene {
    config: OpticalConfig,
    w: ComplexField,
    groups: Vec<BarGroup>,
    d: ComplexField,
    scan: ScanSequence,
}

fn bar_scene(count: usize) -> BarScene {
    let limit = WAVELENGTH / (2.0 * OBJECTIVE_NA);
    let config = scene_config(256, limit / 18.0);
    let linewidths: Vec<f64> =
        [18.0, 14.0, 9.0, 6.0, 5.0, 4.0, 3.0].iter().map(|p| p * config.pixel_pitch).collect();
    let spec = TargetSpec::UsafBars { linewidths: linewidths.clone(), region: None, orientation: Orientation::Vertical };
    let w = synthesize_exit_wave(&spec, &config).unwrap();
    let groups = bar_layout(&linewidths, None, Orientation::Vertical, &config).unwrap();
    let scan = make_scan(count, (2, 4), 1).unwrap();
    let frame = DiffuserFrame::for_scan(config.dim(), &scan, 2);
    let d = make_diffuser(&diffuser_spec(4.0), &frame.config(&config)).unwrap();
    BarScene { config, w, groups, d, scan }
}

fn contrasts(field: &ComplexField, groups: &[BarGroup]) -> Vec<f64> {
    groups.iter().map(|g| bar_contrast(field, g).unwrap()).collect()
}

/// Finest linewidth such that it and every coarser group are resolved.
fn finest_resolved(groups: &[BarGroup], contrast: &[f64]) -> Option<f64> {
    groups
        .iter()
        .zip(contrast)
        .take_while(|(_, c)| **c >= RESOLVED)
        .map(|(g, _)| g.linewidth)
        .last()
}

fn fmt_contrasts(groups: &[BarGroup], contrast: &[f64]) -> String {
    groups
        .iter()
        .zip(contrast)
        .map(|(g, c)| format!("{}px:{c:.2}", g.linewidth_px))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_resolution_gain(bars: &BarScene) -> Outcome {
    let limit = bars.config.diffraction_limit();
    let set = forward_measure(&bars.w, &bars.d, &bars.config, &bars.scan, &NoiseSpec::noiseless()).unwrap();
    let r = solve(&set, &SolverParams::default().with_iterations(50)).unwrap();
    let reg = gauge_register(&r.wavefront, &bars.w).unwrap();
    let psm = contrasts(&reg.field, &bars.groups);

    // diffraction-limited baseline: one image through an all-ones diffuser
    let one = ScanSequence::new(vec![[0.0, 0.0]]).unwrap();
    let frame = DiffuserFrame::for_scan(bars.config.dim(), &one, 2);
    let ones = ComplexField::ones(frame.height, frame.width, bars.config.pixel_pitch).unwrap();
    let image = forward_measure(&bars.w, &ones, &bars.config, &one, &NoiseSpec::noiseless()).unwrap();
    let (h, w) = bars.config.dim();
    let baseline = ComplexField::from_fn(h, w, bars.config.pixel_pitch, |ix| {
        Complex64::new(image.images[0][ix].sqrt(), 0.0)
    })
    .unwrap();
    let base = contrasts(&baseline, &bars.groups);

    let tol = 1e-9 * limit;
    let baseline_ok = bars
        .groups
        .iter()
        .zip(&base)
        .all(|(g, &c)| (c >= RESOLVED) == (g.linewidth >= limit - tol));
    let gain = finest_resolved(&bars.groups, &psm).map_or(0.0, |lw| limit / lw);
    let pass = baseline_ok && gain >= 4.0 && (gain - 4.5).abs() <= 0.5;
    let detail = format!(
        "gain {gain:.2} (4.5 +- 0.5, >= 4), baseline resolves exactly the groups >= limit: {baseline_ok}; psm [{}] baseline [{}]",
        fmt_contrasts(&bars.groups, &psm),
        fmt_contrasts(&bars.groups, &base),
    );
    outcome(pass, detail)
}

/// Counts `k` with `values[k + 1] < values[k]`.
fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|p| p[1] < p[0]).count()
}

/// Reconstructions from the first `J` images of one noisy acquisition with
/// the diffuser known and held fixed.
fn criterion_image_count(bars: &BarScene) -> Outcome {
    let counts = [10usize, 20, 30, 40, 70, 100];
    let four_px = bars.groups.iter().find(|g| g.linewidth_px == 4).expect("4 px group");
    let params = SolverParams { freeze_diffuser: true, ..SolverParams::default().with_iterations(25) };
    let frame = DiffuserFrame::for_scan(bars.config.dim(), &bars.scan, 2);
    let mut pass = true;
    let mut rows = Vec::new();
    for seed in 0..3u64 {
        let noise = NoiseSpec::shot(1e4, 100 + seed);
        let full = forward_measure(&bars.w, &bars.d, &bars.config, &bars.scan, &noise).unwrap();
        let mut corr = Vec::new();
        let mut c30 = 0.0;
        for &k in &counts {
            let init = SolveInit { wavefront: None, diffuser: Some((bars.d.clone(), frame)) };
            let r = solve_with(&full.first(k).unwrap(), &params, init).unwrap();
            let reg = gauge_register(&r.wavefront, &bars.w).unwrap();
            corr.push(reg.correlation);
            if k == 30 {
                c30 = bar_contrast(&reg.field, four_px).unwrap();
            }
        }
        let inv = inversions(&corr);
        pass &= inv <= 1 && c30 >= RESOLVED;
        rows.push(format!(
            "seed {seed}: [{}] inversions {inv}, J=30 4px contrast {c30:.2}",
            corr.iter().map(|c| format!("{c:.5}")).collect::<Vec<_>>().join(" ")
        ));
    }
    outcome(pass, format!("J = {counts:?}; {}", rows.join("; ")))
}

// ---- 6: quantitative phase -----------------------------------------------------

fn plateau_mean(field: &ComplexField, disc: Disc, background: [f64; 4]) -> f64 {
    let path = TracePath::Segment {
        start: [disc.center_x - 1.5 * disc.radius, disc.center_y],
        end: [disc.center_x + 1.5 * disc.radius, disc.center_y],
    };
    let trace = phase_line_trace(field, &path, background).unwrap();
    let mid = path.length() / 2.0;
    let inner: Vec<f64> = trace
        .iter()
        .filter(|p| (p.arclength - mid).abs() <= 0.5 * disc.radius)
        .map(|p| p.phase)
        .collect();
    inner.iter().sum::<f64>() / inner.len() as f64
}

fn criterion_phase_disc() -> Outcome {
    let config = scene_config(256, 0.887e-6);
    let (fh, fw) = config.field_of_view();
    let disc = Disc { center_x: fw / 2.0, center_y: fh / 2.0, radius: 12e-6 };
    let spec = TargetSpec::PhaseDisc { height: 1.0, discs: vec![disc] };
    let w = synthesize_exit_wave(&spec, &config).unwrap();
    let s = scene(w, config, 100, 2.0, &NoiseSpec::noiseless());
    let r = solve(&s.set, &SolverParams::default().with_iterations(50)).unwrap();
    let reg = gauge_register(&r.wavefront, &s.w).unwrap();
    let background = [2e-6, 2e-6, 20e-6, 20e-6];
    let truth = plateau_mean(&s.w, disc, background);
    let recovered = plateau_mean(&reg.field, disc, background);
    outcome(
        (recovered - truth).abs() <= 0.05,
        format!("plateau {recovered:.4} rad vs truth {truth:.4} rad (+- 0.05), W correlation {:.4}", reg.correlation),
    )
}

// ---- 7: two-layer refocusing ---------------------------------------------------

fn criterion_two_layer() -> Outcome {
    let config = scene_config(256, 0.887e-6);
    let gap = 320e-6;
    let linewidths: Vec<f64> = [6.0, 4.0, 3.0].iter().map(|p| p * config.pixel_pitch).collect();
    let layer = |region: [f64; 4]| TargetSpec::UsafBars {
        linewidths: linewidths.clone(),
        region: Some(region),
        orientation: Orientation::Vertical,
    };
    let (r1, r2) = ([0.05, 0.1, 0.45, 0.9], [0.55, 0.1, 0.95, 0.9]);
    let spec = TargetSpec::TwoLayer { first: Box::new(layer(r1)), second: Box::new(layer(r2)), gap };
    let w = synthesize_exit_wave(&spec, &config).unwrap();
    let groups = [
        bar_layout(&linewidths, Some(r1), Orientation::Vertical, &config).unwrap(),
        bar_layout(&linewidths, Some(r2), Orientation::Vertical, &config).unwrap(),
    ];
    let s = scene(w, config, 100, 2.0, &NoiseSpec::noiseless());
    let r = solve(&s.set, &SolverParams::default().with_iterations(50)).unwrap();
    let reg = gauge_register(&r.wavefront, &s.w).unwrap();

    let step = 16e-6;
    let z: Vec<f64> = (0..=40).map(|k| -480e-6 + k as f64 * step).collect();
    let stack = refocus(&reg.field, &config, &z).unwrap();
    // layer contrast per plane: [layer][plane][group]
    let table: Vec<Vec<Vec<f64>>> =
        groups.iter().map(|g| stack.planes.iter().map(|(_, f)| contrasts(f, g)).collect()).collect();
    let planes = [-gap, 0.0];
    let nearest = |target: f64| {
        (0..z.len()).min_by(|&a, &b| (z[a] - target).abs().total_cmp(&(z[b] - target).abs())).unwrap()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let resolved = |v: &[f64]| v.iter().all(|&c| c >= RESOLVED);
    let mut pass = true;
    let mut notes = Vec::new();
    for l in 0..2 {
        let peak = (0..z.len()).max_by(|&a, &b| mean(&table[l][a]).total_cmp(&mean(&table[l][b]))).unwrap();
        let own = nearest(planes[l]);
        let other = nearest(planes[1 - l]);
        let within = (z[peak] - planes[l]).abs() <= 0.1 * gap;
        let exclusive = resolved(&table[l][own]) && !resolved(&table[l][other]);
        pass &= within && exclusive;
        notes.push(format!(
            "layer {} peak at {:.0} um (expected {:.0} +- {:.0}), contrast own plane {:?} other plane {:?}",
            l + 1,
            z[peak] * 1e6,
            planes[l] * 1e6,
            0.1 * gap * 1e6,
            table[l][own].iter().map(|c| (c * 100.0).round() / 100.0).collect::<Vec<_>>(),
            table[l][other].iter().map(|c| (c * 100.0).round() / 100.0).collect::<Vec<_>>(),
        ));
    }
    outcome(pass, notes.join("; "))
}

// ---- 8: 3D localization ------------------------------------------------------

fn criterion_localization() -> Outcome {
    let config = scene_config(256, 0.887e-6);
    let thickness = 400e-6;
    let spheres = random_spheres(7, 3e-6, thickness, 25e-6, &config, 11).unwrap();
    let spec = TargetSpec::SphereVolume {
        spheres: spheres.clone(),
        thickness,
        slice_thickness: 5e-6,
        index_contrast: 0.002,
        absorption: 0.01,
    };
    let w = synthesize_exit_wave(&spec, &config).unwrap();
    let s = scene(w, config, 100, 2.0, &NoiseSpec::noiseless());
    let r = solve(&s.set, &SolverParams::default().with_iterations(50)).unwrap();
    let reg = gauge_register(&r.wavefront, &s.w).unwrap();

    let step = 20e-6;
    let z: Vec<f64> = (0..=21).map(|k| -420e-6 + k as f64 * step).collect();
    let stack = refocus(&reg.field, &config, &z).unwrap();
    let found = localize_minima(&stack, 10e-6, 0.5).unwrap();
    let pitch = config.pixel_pitch;
    let mut claimed = vec![false; found.len()];
    let (mut lateral, mut axial): (f64, f64) = (0.0, 0.0);
    let mut matched = 0;
    for s in &spheres {
        // a sphere at depth t comes into focus at z = -t
        let best = found
            .positions
            .iter()
            .enumerate()
            .filter(|(i, _)| !claimed[*i])
            .map(|(i, p)| (i, (p.x - s.x).hypot(p.y - s.y), (p.z + s.depth).abs()))
            .filter(|&(_, dl, dz)| dl <= pitch && dz <= step)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, dl, dz)) = best {
            claimed[i] = true;
            matched += 1;
            lateral = lateral.max(dl);
            axial = axial.max(dz);
        }
    }
    let false_positives = found.len() - matched;
    outcome(
        matched == spheres.len() && false_positives == 0,
        format!(
            "recall {matched}/{}, false positives {false_positives}, worst lateral {:.2} px (<= 1), worst axial {:.2} steps (<= 1)",
            spheres.len(),
            lateral / pitch,
            axial / step
        ),
    )
}

// ---- 9: invariants -----------------------------------------------------------

fn band_limited(config: &OpticalConfig, seed: u64) -> ComplexField {
    let f = random_field(config.grid_height, config.grid_width, config.pixel_pitch, seed);
    let mask = angular_spectrum_transfer(config, 0.0).unwrap();
    inverse_spectrum(&forward_spectrum(&f).unwrap().mul(&mask).unwrap()).unwrap()
}

fn criterion_invariants() -> Outcome {
    let mut failed: Vec<&str> = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };
    let config = small_config(32);
    let p = config.pixel_pitch;
    for seed in 0..8u64 {
        let f = random_field(32, 24, p, seed);
        let s = forward_spectrum(&f).unwrap();
        check("parseval", ((s.power() - f.power() * 768.0) / s.power()).abs() < 1e-10);
        check("fft round trip", inverse_spectrum(&s).unwrap().max_abs_diff(&f) < 1e-12);

        let d = 40e-6 * (seed as f64 - 3.5);
        let b = band_limited(&config, seed);
        let there = propagate(&b, &config, d).unwrap();
        check("unitarity", ((there.power() - b.power()) / b.power()).abs() < 1e-9);
        check("invertibility", propagate(&there, &config, -d).unwrap().max_abs_diff(&b) < 1e-9 * b.max_abs());
        let once = propagate(&there, &config, 2.0 * d).unwrap();
        check("composition", once.max_abs_diff(&propagate(&b, &config, 3.0 * d).unwrap()) < 1e-9 * b.max_abs());

        let (dx, dy) = (seed as i64 - 3, 5 - seed as i64);
        let g = shift_field(&f, dx as f64, dy as f64);
        let (h, w) = f.dim();
        let exact = (0..h).all(|r| {
            (0..w).all(|c| {
                let sr = (r as i64 - dy).rem_euclid(h as i64) as usize;
                let sc = (c as i64 - dx).rem_euclid(w as i64) as usize;
                g.get(r, c) == f.get(sr, sc)
            })
        });
        check("integer shift exactness", exact);

        let scan = make_scan(4, (1, 3), seed).unwrap();
        let frame = DiffuserFrame::for_scan(config.dim(), &scan, 2);
        let (fh, fw) = frame.dim();
        let w0 = random_field(32, 32, p, seed + 10);
        let d0 = random_phase(fh, fw, p, seed + 20);
        let set = forward_measure(&w0, &d0, &config, &scan, &NoiseSpec::noiseless()).unwrap();
        let params = SolverParams::default();
        let eps = params.guard_for(set.max_intensity());
        let guess = random_field(32, 32, p, seed + 30);
        let (_, _, ws) = inner_update(&guess, &d0, &frame, &config, &set.images[1], scan.get(1), &params, eps, 1).unwrap();
        let replaced = ws
            .replaced_field
            .data()
            .iter()
            .zip(&set.images[1])
            .all(|(z, &i)| (z.norm() - i.sqrt()).abs() <= 4.0 * f64::EPSILON * i.sqrt());
        check("amplitude replacement", replaced);

        let rot = Complex64::from_polar(1.0, 0.7 * seed as f64);
        let turned = forward_measure(&w0.scale(rot).unwrap(), &d0.scale(rot.conj()).unwrap(), &config, &scan, &NoiseSpec::noiseless()).unwrap();
        let same = set.images.iter().zip(&turned.images).all(|(a, b)| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
        });
        check("measurement gauge", same);
        let base = gauge_register(&guess, &w0).unwrap().correlation;
        let moved = shift_field(&guess, dx as f64, dy as f64).scale(rot).unwrap();
        check("registration gauge", (gauge_register(&moved, &w0).unwrap().correlation - base).abs() < 1e-10);
        check(
            "correlation gauge",
            (complex_correlation(guess.scale(rot).unwrap().data(), w0.data()) - complex_correlation(guess.data(), w0.data())).abs() < 1e-12,
        );

        if seed < 2 {
            let params = SolverParams::default().with_iterations(2);
            let (a, b) = (solve(&set, &params).unwrap(), solve(&set, &params).unwrap());
            check("solver determinism", a.wavefront == b.wavefront && a.trace.data_error == b.trace.data_error);
            let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
            let extras = DatasetExtras { noise: None, seeds: Default::default(), truth: Some((w0.clone(), d0.clone())), source: serde_json::Value::Null };
            let hashes: Vec<String> = dirs.iter().map(|d| write_dataset(d.path(), &set, &extras).unwrap()).collect();
            let identical = std::fs::read_dir(dirs[0].path()).unwrap().all(|e| {
                let name = e.unwrap().file_name();
                std::fs::read(dirs[0].path().join(&name)).unwrap() == std::fs::read(dirs[1].path().join(&name)).unwrap()
            });
            check("byte-identical datasets", hashes[0] == hashes[1] && identical);
        }
    }
    failed.dedup();
    let detail = if failed.is_empty() {
        "Parseval, propagation unitarity and composition, shift exactness, amplitude replacement, gauge invariances, determinism".to_string()
    } else {
        format!("violated: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

// ---- 10: performance -----------------------------------------------------------

fn criterion_performance() -> Outcome {
    let config = scene_config(1024, 0.887e-6);
    let w = smooth_object(&config, 0.1, 5);
    let s = scene(w, config, 100, 2.0, &NoiseSpec::noiseless());
    let start = Instant::now();
    let r = solve(&s.set, &SolverParams::default().with_iterations(25)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        secs < 600.0,
        format!(
            "1024x1024, J = 100, 25 sweeps in {secs:.1} s (< 600 s) on {} thread(s), final error {:.2e}",
            rayon::current_num_threads(),
            r.trace.last().unwrap_or(f64::NAN)
        ),
    )
}

/// Runs every criterion, or only the ids given as arguments.
fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| selected.is_empty() || selected.contains(&id);
    let mut all = true;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let start = Instant::now();
        let o = run();
        all &= o.pass;
        println!(
            "{} {id:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "forward model matches direct DFT", &mut criterion_forward_oracle);
    report(2, "truth is a fixed point", &mut criterion_fixed_point);
    report(3, "closed-loop recovery", &mut criterion_closed_loop);
    if wanted(4) || wanted(5) {
        let bars = bar_scene(300);
        report(4, "resolution gain", &mut || criterion_resolution_gain(&bars));
        report(5, "image-count ablation", &mut || criterion_image_count(&bars));
    }
    report(6, "quantitative phase", &mut criterion_phase_disc);
    report(7, "two-layer refocusing", &mut criterion_two_layer);
    report(8, "3D localization", &mut criterion_localization);
    report(9, "invariants", &mut criterion_invariants);
    report(10, "performance", &mut criterion_performance);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
