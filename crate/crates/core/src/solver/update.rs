use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::params::{DiffuserUpdate, SolverParams};
use crate::error::{Error, Result};
use crate::field::{
    defocus_ctf, forward_spectrum, inverse_spectrum, propagate, ComplexField, OpticalConfig,
};
use crate::simulator::DiffuserFrame;

/// Counts of guarded operations during one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GuardStats {
    /// Pixels where `|psi_j| < epsilon` and the phase was reset to zero.
    pub amplitude: usize,
    /// Pixels where the wavefront denominator was clamped to `epsilon`.
    pub wavefront_denominator: usize,
    /// Pixels where the diffuser denominator was clamped to `epsilon`.
    pub diffuser_denominator: usize,
    /// Smallest denominator actually divided by.
    pub min_denominator: f64,
}

/// Every intermediate of one update, in the order it is produced.
#[derive(Clone, Debug)]
pub struct IterationWorkspace {
    /// `W'`, the wavefront at the diffuser plane.
    pub w_prop: ComplexField,
    /// `D_j`, the diffuser window seen at this scan position.
    pub d_shifted: ComplexField,
    /// `phi_j = W' D_j`
    pub exit_wave: ComplexField,
    /// `Phi_j`, centered spectrum of `phi_j`.
    pub exit_spectrum: ComplexField,
    /// `Psi_j = Phi_j CTF`
    pub filtered_spectrum: ComplexField,
    /// `psi_j`
    pub filtered_field: ComplexField,
    /// `psi'_j`, `psi_j` with the measured amplitude.
    pub replaced_field: ComplexField,
    /// Centered spectrum of `psi'_j`.
    pub replaced_spectrum: ComplexField,
    /// `Phi'_j`
    pub updated_spectrum: ComplexField,
    /// `phi'_j`
    pub updated_exit: ComplexField,
    pub guards: GuardStats,
}

/// Replaces `|psi|` by the measured amplitude in place. Returns the number
/// of guarded pixels and whether every input amplitude was finite.
///
/// When `psi` is finer than `image` by an integer factor, each camera pixel
/// constrains the mean power of its block: the block is rescaled by
/// `sqrt(I / mean |psi|^2)`.
pub(crate) fn replace_amplitude(psi: &mut Array2<Complex64>, image: &Array2<f64>, eps: f64) -> (usize, bool) {
    let (h, w) = psi.dim();
    let (ih, iw) = image.dim();
    let factor = h / ih;
    debug_assert!(factor >= 1 && factor * ih == h && factor * iw == w);
    let mut guarded = 0;
    let mut finite = true;
    if factor == 1 {
        Zip::from(psi).and(image).for_each(|z, &i| {
            let m = z.norm_sqr().sqrt();
            finite &= m.is_finite();
            let target = i.sqrt();
            if m < eps {
                *z = Complex64::new(target, 0.0);
                guarded += 1;
            } else {
                *z = (*z / m) * target;
            }
        });
        return (guarded, finite);
    }
    let norm = 1.0 / (factor * factor) as f64;
    for r in 0..ih {
        for c in 0..iw {
            let mut block = psi.slice_mut(ndarray::s![
                r * factor..(r + 1) * factor,
                c * factor..(c + 1) * factor
            ]);
            let mean = block.iter().map(|z| z.norm_sqr()).sum::<f64>() * norm;
            let target = image[[r, c]].sqrt();
            let m = mean.sqrt();
            finite &= m.is_finite();
            if m < eps {
                block.fill(Complex64::new(target, 0.0));
                guarded += factor * factor;
            } else {
                let g = target / m;
                block.mapv_inplace(|z| z * g);
            }
        }
    }
    (guarded, finite)
}

/// `beta conj(CTF) / max |CTF|^2`, the line-11 step per frequency.
pub(crate) fn spectrum_step(ctf: &Array2<Complex64>, beta: f64) -> Array2<Complex64> {
    let max = ctf.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if max == 0.0 {
        return Array2::zeros(ctf.dim());
    }
    ctf.mapv(|c| c.conj() * (beta / max))
}

/// Line 11 in place: `spectrum += step (replaced - filtered)`. Returns
/// whether the result is finite.
pub(crate) fn update_spectrum(
    spectrum: &mut Array2<Complex64>,
    replaced: &Array2<Complex64>,
    filtered: &Array2<Complex64>,
    step: &Array2<Complex64>,
) -> bool {
    let mut finite = true;
    Zip::from(spectrum)
        .and(replaced)
        .and(filtered)
        .and(step)
        .for_each(|s, &r, &f, &k| {
            *s += k * (r - f);
            finite &= s.re.is_finite() && s.im.is_finite();
        });
    finite
}

pub(crate) fn max_norm_sqr(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
}

/// Lines 13 and 14 in place. `w` is `W'` (full object grid), `dj` the
/// diffuser window, `phi` and `phi_new` the exit wave before and after the
/// spectrum update, and `maxima` holds `max |dj|^2` and `max |w|^2`.
/// Returns `max |w|^2` after the update, or `Err(line)` on the first
/// non-finite result.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_factors(
    w: &mut Array2<Complex64>,
    dj: &mut Array2<Complex64>,
    phi: &Array2<Complex64>,
    phi_new: &Array2<Complex64>,
    maxima: (f64, f64),
    params: &SolverParams,
    eps: f64,
    guards: &mut GuardStats,
) -> std::result::Result<f64, u8> {
    let (max_d, max_w) = maxima;
    let mut max_new = 0.0f64;
    let (ao, ad) = (params.alpha_obj, params.alpha_d);
    let update_d = !params.freeze_diffuser;
    let printed = params.diffuser_update == DiffuserUpdate::AsPrinted;
    let mut min_den = if guards.min_denominator > 0.0 {
        guards.min_denominator
    } else {
        f64::INFINITY
    };
    let mut bad = u8::MAX;
    Zip::from(w)
        .and(dj)
        .and(phi)
        .and(phi_new)
        .for_each(|wv, dv, &p, &pn| {
            let diff = pn - p;
            let w_before = *wv;
            let d_before = *dv;
            if !diff.re.is_finite() || !diff.im.is_finite() {
                bad = bad.min(12);
                return;
            }
            let mut den = (1.0 - ao) * d_before.norm_sqr() + ao * max_d;
            if den < eps {
                den = eps;
                guards.wavefront_denominator += 1;
            }
            min_den = min_den.min(den);
            let nw = w_before + d_before.conj() * diff / den;
            if !(nw.re.is_finite() && nw.im.is_finite()) {
                bad = bad.min(13);
            }
            max_new = max_new.max(nw.norm_sqr());
            *wv = nw;
            if update_d {
                let (factor, mut den) = if printed {
                    (d_before.conj(), (1.0 - ad) * d_before.norm_sqr() + ad * max_d)
                } else {
                    (w_before.conj(), (1.0 - ad) * w_before.norm_sqr() + ad * max_w)
                };
                if den < eps {
                    den = eps;
                    guards.diffuser_denominator += 1;
                }
                min_den = min_den.min(den);
                let nd = d_before + factor * diff / den;
                if !(nd.re.is_finite() && nd.im.is_finite()) {
                    bad = bad.min(14);
                }
                *dv = nd;
            }
        });
    guards.min_denominator = min_den;
    if bad != u8::MAX {
        return Err(bad);
    }
    Ok(max_new)
}

fn check(field: &ComplexField, line: u8, index: usize) -> Result<()> {
    if field.data().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::SolverNonFinite { line, index })
    }
}

/// One inner update written line by line against the public field
/// operations. `wavefront` lives on the object grid and `diffuser` on the
/// extended grid described by `frame`. `index` only labels diagnostics.
///
/// [`solve`](super::solve) runs the same arithmetic through preallocated
/// buffers and native-layout spectra; this form exists so every
/// intermediate can be inspected.
#[allow(clippy::too_many_arguments)]
pub fn inner_update(
    wavefront: &ComplexField,
    diffuser: &ComplexField,
    frame: &DiffuserFrame,
    config: &OpticalConfig,
    image: &Array2<f64>,
    shift: (f64, f64),
    params: &SolverParams,
    epsilon: f64,
    index: usize,
) -> Result<(ComplexField, ComplexField, IterationWorkspace)> {
    params.validate()?;
    if wavefront.dim() != config.dim() {
        return Err(Error::GridMismatch {
            expected: config.dim(),
            found: wavefront.dim(),
        });
    }
    if diffuser.dim() != frame.dim() {
        return Err(Error::GridMismatch {
            expected: frame.dim(),
            found: diffuser.dim(),
        });
    }
    let (h, w) = config.dim();
    let (ih, iw) = image.dim();
    if ih == 0 || iw == 0 || h % ih != 0 || w % iw != 0 || h / ih != w / iw {
        return Err(Error::GridMismatch {
            expected: config.dim(),
            found: image.dim(),
        });
    }
    let pitch = config.pixel_pitch;
    let d = config.diffuser_distance;
    let ctf = defocus_ctf(config, -d)?;
    let mut guards = GuardStats::default();

    // 4
    let w_prop = propagate(wavefront, config, d)?;
    check(&w_prop, 4, index)?;
    // 5
    let d_shifted = ComplexField::from_parts(frame.window(diffuser.data(), shift), pitch);
    check(&d_shifted, 5, index)?;
    // 6
    let exit_wave = w_prop.mul(&d_shifted)?;
    // 7
    let exit_spectrum = forward_spectrum(&exit_wave)?;
    // 8
    let filtered_spectrum = exit_spectrum.mul(&ctf)?;
    // 9
    let filtered_field = inverse_spectrum(&filtered_spectrum)?;
    check(&filtered_field, 9, index)?;
    // 10
    let mut replaced = filtered_field.data().clone();
    guards.amplitude = replace_amplitude(&mut replaced, image, epsilon).0;
    let replaced_field = ComplexField::from_parts(replaced, pitch);
    check(&replaced_field, 10, index)?;
    let replaced_spectrum = forward_spectrum(&replaced_field)?;
    // 11
    let step = spectrum_step(ctf.data(), params.beta_phi);
    let mut updated = exit_spectrum.data().clone();
    let _ = update_spectrum(
        &mut updated,
        replaced_spectrum.data(),
        filtered_spectrum.data(),
        &step,
    );
    let updated_spectrum = ComplexField::from_parts(updated, pitch);
    check(&updated_spectrum, 11, index)?;
    // 12
    let updated_exit = inverse_spectrum(&updated_spectrum)?;
    check(&updated_exit, 12, index)?;
    // 13, 14
    let mut w_new = w_prop.data().clone();
    let mut dj_new = d_shifted.data().clone();
    update_factors(
        &mut w_new,
        &mut dj_new,
        exit_wave.data(),
        updated_exit.data(),
        (max_norm_sqr(d_shifted.data()), max_norm_sqr(w_prop.data())),
        params,
        epsilon,
        &mut guards,
    )
    .map_err(|line| Error::SolverNonFinite { line, index })?;
    // 15
    let mut d_new = diffuser.data().clone();
    frame.write_back(&mut d_new, d_shifted.data(), &dj_new, shift);
    let d_new = ComplexField::from_parts(d_new, pitch);
    check(&d_new, 15, index)?;
    // 16
    let w_back = propagate(&ComplexField::from_parts(w_new, pitch), config, -d)?;
    check(&w_back, 16, index)?;

    let workspace = IterationWorkspace {
        w_prop,
        d_shifted,
        exit_wave,
        exit_spectrum,
        filtered_spectrum,
        filtered_field,
        replaced_field,
        replaced_spectrum,
        updated_spectrum,
        updated_exit,
        guards,
    };
    Ok((w_back, d_new, workspace))
}
