use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::momentum::momentum_in_place;
use super::params::{InitAmplitude, MomentumMode, SolverParams, SweepOrder};
use super::update::{
    max_norm_sqr, replace_amplitude, spectrum_step, update_factors, update_spectrum, GuardStats,
};
use crate::error::{Error, Result};
use crate::field::fft::{center, plan, transposed, Fft2};
use crate::field::{ctf_native, transfer_native, ComplexField, OpticalConfig};
use crate::simulator::{DiffuserFrame, ForwardModel, MeasurementSet, ScanSequence};

/// Per-sweep record of a solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// Normalized amplitude residual after each sweep.
    pub data_error: Vec<f64>,
    /// Seconds spent in each sweep, including the error evaluation.
    pub wall_time: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.data_error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data_error.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.data_error.last().copied()
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub wavefront: ComplexField,
    /// On the extended grid described by `frame`.
    pub diffuser: ComplexField,
    pub frame: DiffuserFrame,
    pub trace: ConvergenceTrace,
    /// Data error of the initial guess.
    pub initial_error: f64,
    pub guards: GuardStats,
    pub params: SolverParams,
    /// Optics of the reconstruction grid (finer than the camera when
    /// upsampling).
    pub config: OpticalConfig,
}

/// Reconstruction-grid geometry derived from a measurement set.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionGrid {
    pub config: OpticalConfig,
    pub scan: ScanSequence,
    pub frame: DiffuserFrame,
    pub upsample: usize,
}

impl ReconstructionGrid {
    pub fn new(set: &MeasurementSet, upsample: usize) -> Result<Self> {
        if upsample == 0 {
            return Err(Error::Config("upsample must be >= 1".into()));
        }
        let u = upsample;
        let config = OpticalConfig {
            pixel_pitch: set.config.pixel_pitch / u as f64,
            grid_height: set.config.grid_height * u,
            grid_width: set.config.grid_width * u,
            ..set.config
        };
        config.validate()?;
        let scan = if u == 1 {
            set.scan.clone()
        } else {
            set.scan.scaled(u as f64)?
        };
        let frame = DiffuserFrame::for_scan(config.dim(), &scan, set.diffuser_margin * u);
        Ok(Self {
            config,
            scan,
            frame,
            upsample: u,
        })
    }
}

/// Optional starting point for [`solve_with`].
#[derive(Clone, Debug, Default)]
pub struct SolveInit {
    pub wavefront: Option<ComplexField>,
    /// A diffuser and the frame it is stored on. It is re-expressed on the
    /// frame of the measurement set being solved.
    pub diffuser: Option<(ComplexField, DiffuserFrame)>,
}

/// Initial guess: wavefront amplitude from the mean measurement with zero
/// phase, an all-ones diffuser, and the CTF `defocus_ctf(config, -d)`.
pub fn initialize(
    set: &MeasurementSet,
    params: &SolverParams,
) -> Result<(ComplexField, ComplexField, ComplexField)> {
    set.validate()?;
    params.validate()?;
    let grid = ReconstructionGrid::new(set, params.upsample)?;
    let w0 = initial_wavefront(set, params, &grid)?;
    let (fh, fw) = grid.frame.dim();
    let d0 = ComplexField::ones(fh, fw, grid.config.pixel_pitch)?;
    let ctf = ComplexField::new(
        center(&ctf_native(&grid.config, -grid.config.diffuser_distance)),
        grid.config.pixel_pitch,
    )?;
    Ok((w0, d0, ctf))
}

fn initial_wavefront(
    set: &MeasurementSet,
    params: &SolverParams,
    grid: &ReconstructionGrid,
) -> Result<ComplexField> {
    let n = set.len() as f64;
    let mut acc = Array2::<f64>::zeros(set.config.dim());
    for img in &set.images {
        match params.init_amplitude {
            InitAmplitude::IntensityMean => acc += img,
            InitAmplitude::AmplitudeMean => Zip::from(&mut acc).and(img).for_each(|a, &i| *a += i.sqrt()),
        }
    }
    let amp = match params.init_amplitude {
        InitAmplitude::IntensityMean => acc.mapv(|v| (v / n).sqrt()),
        InitAmplitude::AmplitudeMean => acc.mapv(|v| v / n),
    };
    let u = grid.upsample;
    let (h, w) = grid.config.dim();
    ComplexField::new(
        Array2::from_shape_fn((h, w), |(r, c)| Complex64::new(amp[[r / u, c / u]], 0.0)),
        grid.config.pixel_pitch,
    )
}

/// Native-layout propagation helper bound to one grid. The transfer
/// functions are stored transposed.
struct Propagator {
    fft: Arc<Fft2>,
    forward: Array2<Complex64>,
    backward: Array2<Complex64>,
}

impl Propagator {
    fn new(config: &OpticalConfig) -> Self {
        let d = config.diffuser_distance;
        Self {
            fft: plan(config.grid_height, config.grid_width),
            forward: transposed(&transfer_native(config, d)),
            backward: transposed(&transfer_native(config, -d)),
        }
    }

    fn apply(&self, field: &mut Array2<Complex64>, forward: bool) {
        self.fft.forward_transposed(field);
        *field *= if forward { &self.forward } else { &self.backward };
        self.fft.inverse_transposed(field);
    }
}

fn amplitude_residual(intensity: f64, model: f64) -> f64 {
    if model == 0.0 {
        intensity
    } else {
        (intensity.sqrt() - model).powi(2)
    }
}

/// Model amplitude residual of one measurement, and its intensity sum.
fn residual(psi: &Array2<Complex64>, image: &Array2<f64>) -> (f64, f64) {
    let u = psi.nrows() / image.nrows();
    // same summation order for both sums, so a zero model gives exactly 1
    let total = image.iter().fold(0.0, |a, &i| a + i);
    if u == 1 {
        let r = Zip::from(psi)
            .and(image)
            .fold(0.0, |acc, z, &i| acc + amplitude_residual(i, z.norm_sqr().sqrt()));
        return (r, total);
    }
    let norm = 1.0 / (u * u) as f64;
    let mut r = 0.0;
    for ((row, col), &i) in image.indexed_iter() {
        let block = psi.slice(s![row * u..(row + 1) * u, col * u..(col + 1) * u]);
        let m = (block.iter().map(|z| z.norm_sqr()).sum::<f64>() * norm).sqrt();
        r += amplitude_residual(i, m);
    }
    (r, total)
}

fn error_at_diffuser_plane(
    model: &ForwardModel,
    w_prop: &Array2<Complex64>,
    diffuser: &Array2<Complex64>,
    images: &[Array2<f64>],
    scan: &ScanSequence,
) -> f64 {
    let parts: Vec<(f64, f64)> = (0..images.len())
        .into_par_iter()
        .map_init(
            || Array2::zeros(w_prop.dim()),
            |field, j| {
                model.detector_field_into(w_prop, diffuser, scan.get(j), field);
                residual(field, &images[j])
            },
        )
        .collect();
    // sequential reduction keeps the result independent of thread count
    let (num, den) = parts
        .iter()
        .fold((0.0, 0.0), |(a, b), (r, t)| (a + r, b + t));
    if den == 0.0 {
        return 0.0;
    }
    num / den
}

/// `sum_j sum_px (sqrt(I_j) - |model_j|)^2 / sum_j sum_px I_j` under the
/// full forward model. `wavefront` may be finer than the camera by an
/// integer factor; `diffuser` must then sit on the matching extended grid.
pub fn data_error(
    wavefront: &ComplexField,
    diffuser: &ComplexField,
    set: &MeasurementSet,
) -> Result<f64> {
    set.validate()?;
    let (h, w) = wavefront.dim();
    let (ch, cw) = set.config.dim();
    if h % ch != 0 || w % cw != 0 || h / ch != w / cw {
        return Err(Error::GridMismatch {
            expected: set.config.dim(),
            found: wavefront.dim(),
        });
    }
    let grid = ReconstructionGrid::new(set, h / ch)?;
    if diffuser.dim() != grid.frame.dim() {
        return Err(Error::GridMismatch {
            expected: grid.frame.dim(),
            found: diffuser.dim(),
        });
    }
    let prop = Propagator::new(&grid.config);
    let mut w_prop = wavefront.data().clone();
    prop.apply(&mut w_prop, true);
    let model = ForwardModel::new(&grid.config, grid.frame);
    Ok(error_at_diffuser_plane(
        &model,
        &w_prop,
        diffuser.data(),
        &set.images,
        &grid.scan,
    ))
}

/// Buffered inner update running at the diffuser plane.
///
/// Lines 16 and 4 of consecutive updates cancel on band-limited fields, so
/// the wavefront is kept as `W'` for a whole sweep and propagated back once
/// at the end.
struct Engine<'a> {
    fft: Arc<Fft2>,
    ctf: Array2<Complex64>,
    step: Array2<Complex64>,
    frame: DiffuserFrame,
    params: &'a SolverParams,
    eps: f64,
    dj: Array2<Complex64>,
    dj_before: Array2<Complex64>,
    phi: Array2<Complex64>,
    spectrum: Array2<Complex64>,
    filtered: Array2<Complex64>,
    psi: Array2<Complex64>,
    /// `max |W'|^2`, carried from one update to the next.
    max_w: Option<f64>,
    guards: GuardStats,
}

impl<'a> Engine<'a> {
    fn new(config: &OpticalConfig, frame: DiffuserFrame, params: &'a SolverParams, eps: f64) -> Self {
        // spectra are kept transposed, see `Fft2::forward_transposed`
        let ctf = transposed(&ctf_native(config, -config.diffuser_distance));
        let step = spectrum_step(&ctf, params.beta_phi);
        let zeros = Array2::zeros(config.dim());
        let zeros_t = Array2::zeros((config.grid_width, config.grid_height));
        Self {
            fft: plan(config.grid_height, config.grid_width),
            ctf,
            step,
            frame,
            params,
            eps,
            dj: zeros.clone(),
            dj_before: zeros.clone(),
            phi: zeros.clone(),
            spectrum: zeros,
            filtered: zeros_t.clone(),
            psi: zeros_t,
            max_w: None,
            guards: GuardStats::default(),
        }
    }

    fn update(
        &mut self,
        w_prop: &mut Array2<Complex64>,
        diffuser: &mut Array2<Complex64>,
        image: &Array2<f64>,
        shift: (f64, f64),
        index: usize,
    ) -> Result<()> {
        let integer = shift.0.fract() == 0.0 && shift.1.fract() == 0.0;
        let (h, w) = (self.frame.object_height, self.frame.object_width);
        let (r, c) = self.frame.window_origin(shift);
        let window = if integer {
            diffuser.slice(s![r..r + h, c..c + w])
        } else {
            self.dj_before = self.frame.window(diffuser, shift);
            self.dj_before.view()
        };
        let mut max_d = 0.0f64;
        Zip::from(&mut self.dj)
            .and(&mut self.phi)
            .and(&mut self.spectrum)
            .and(window)
            .and(&*w_prop)
            .for_each(|dj, p, s, &d, &a| {
                *dj = d;
                *p = a * d;
                *s = *p;
                max_d = max_d.max(d.norm_sqr());
            });
        self.fft.forward_transposed(&mut self.spectrum);
        Zip::from(&mut self.filtered)
            .and(&mut self.psi)
            .and(&self.spectrum)
            .and(&self.ctf)
            .for_each(|f, p, &s, &k| {
                *f = s * k;
                *p = *f;
            });
        self.fft.inverse_transposed(&mut self.psi);
        let (guarded, finite) = replace_amplitude(&mut self.psi, image, self.eps);
        if !finite {
            return Err(Error::SolverNonFinite { line: 9, index });
        }
        self.guards.amplitude += guarded;
        self.fft.forward_transposed(&mut self.psi);
        if !update_spectrum(&mut self.spectrum, &self.psi, &self.filtered, &self.step) {
            return Err(Error::SolverNonFinite { line: 11, index });
        }
        self.fft.inverse_transposed(&mut self.spectrum);
        let max_w = *self.max_w.get_or_insert_with(|| max_norm_sqr(w_prop));
        // cleared first so an error leaves no stale maximum behind
        self.max_w = None;
        let max_new = update_factors(
            w_prop,
            &mut self.dj,
            &self.phi,
            &self.spectrum,
            (max_d, max_w),
            self.params,
            self.eps,
            &mut self.guards,
        )
        .map_err(|line| Error::SolverNonFinite { line, index })?;
        self.max_w = Some(max_new);
        if self.params.freeze_diffuser {
            return Ok(());
        }
        if integer {
            diffuser.slice_mut(s![r..r + h, c..c + w]).assign(&self.dj);
        } else {
            self.frame.write_back(diffuser, &self.dj_before, &self.dj, shift);
            if !all_finite(diffuser) {
                return Err(Error::SolverNonFinite { line: 15, index });
            }
        }
        Ok(())
    }
}

fn all_finite(a: &Array2<Complex64>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn sweep_order(order: SweepOrder, count: usize, sweep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).collect();
    if let SweepOrder::Shuffled { seed } = order {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sweep as u64);
        idx.shuffle(&mut rng);
    }
    idx
}

/// Blind joint recovery of the wavefront and the diffuser.
pub fn solve(set: &MeasurementSet, params: &SolverParams) -> Result<SolveResult> {
    solve_with(set, params, SolveInit::default())
}

/// [`solve`] from an explicit starting point. Missing parts of `init` fall
/// back to [`initialize`].
pub fn solve_with(set: &MeasurementSet, params: &SolverParams, init: SolveInit) -> Result<SolveResult> {
    set.validate()?;
    params.validate()?;
    let grid = ReconstructionGrid::new(set, params.upsample)?;
    let config = grid.config;
    let pitch = config.pixel_pitch;
    let w0 = match init.wavefront {
        Some(w) => {
            if w.dim() != config.dim() {
                return Err(Error::GridMismatch {
                    expected: config.dim(),
                    found: w.dim(),
                });
            }
            w
        }
        None => initial_wavefront(set, params, &grid)?,
    };
    let d0 = match init.diffuser {
        Some((d, frame)) => {
            if d.dim() != frame.dim() {
                return Err(Error::GridMismatch {
                    expected: frame.dim(),
                    found: d.dim(),
                });
            }
            if (frame.object_height, frame.object_width) != config.dim() {
                return Err(Error::GridMismatch {
                    expected: config.dim(),
                    found: (frame.object_height, frame.object_width),
                });
            }
            frame.transfer(d.data(), &grid.frame)
        }
        None => Array2::from_elem(grid.frame.dim(), Complex64::new(1.0, 0.0)),
    };

    let eps = params.guard_for(set.max_intensity());
    let prop = Propagator::new(&config);
    let model = ForwardModel::new(&config, grid.frame);
    let mut w_prop = w0.data().clone();
    prop.apply(&mut w_prop, true);
    let mut diffuser = d0;
    let initial_error = error_at_diffuser_plane(&model, &w_prop, &diffuser, &set.images, &grid.scan);
    if params.iterations == 0 {
        return Ok(SolveResult {
            wavefront: w0,
            diffuser: ComplexField::from_parts(diffuser, pitch),
            frame: grid.frame,
            trace: ConvergenceTrace::default(),
            initial_error,
            guards: GuardStats::default(),
            params: params.clone(),
            config,
        });
    }

    let mut engine = Engine::new(&config, grid.frame, params, eps);
    let mut trace = ConvergenceTrace::default();
    let momentum = params.momentum_enabled;
    let eta = params.momentum_eta;
    let mut prev = (w_prop.clone(), diffuser.clone());
    let mut vel = (Array2::zeros(w_prop.dim()), Array2::zeros(diffuser.dim()));
    let limit = 10.0 * initial_error.max(f64::EPSILON);

    for sweep in 0..params.iterations {
        let start = Instant::now();
        for j in sweep_order(params.sweep_order, set.len(), sweep) {
            engine.update(&mut w_prop, &mut diffuser, &set.images[j], grid.scan.get(j), j)?;
            if momentum && params.momentum_mode == MomentumMode::PerMeasurement {
                momentum_in_place(&mut w_prop, &mut prev.0, &mut vel.0, eta);
                momentum_in_place(&mut diffuser, &mut prev.1, &mut vel.1, eta);
                engine.max_w = None;
            }
        }
        if momentum && params.momentum_mode == MomentumMode::PerSweep {
            momentum_in_place(&mut w_prop, &mut prev.0, &mut vel.0, eta);
            momentum_in_place(&mut diffuser, &mut prev.1, &mut vel.1, eta);
            engine.max_w = None;
        }
        let err = error_at_diffuser_plane(&model, &w_prop, &diffuser, &set.images, &grid.scan);
        trace.data_error.push(err);
        trace.wall_time.push(start.elapsed().as_secs_f64());
        log::debug!("sweep {}: data error {err:.4e}", sweep + 1);
        if !err.is_finite() || err > limit {
            return Err(Error::Diverged {
                sweep: sweep + 1,
                error: err,
                initial: initial_error,
                trace: trace.data_error,
            });
        }
    }

    prop.apply(&mut w_prop, false);
    if !all_finite(&w_prop) {
        return Err(Error::SolverNonFinite { line: 16, index: set.len() - 1 });
    }
    Ok(SolveResult {
        wavefront: ComplexField::from_parts(w_prop, pitch),
        diffuser: ComplexField::from_parts(diffuser, pitch),
        frame: grid.frame,
        trace,
        initial_error,
        guards: engine.guards,
        params: params.clone(),
        config,
    })
}
