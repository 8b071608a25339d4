use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::Result;
use crate::field::ComplexField;

/// Nesterov step on one array:
/// `velocity = eta velocity + (current - previous)`, `current += eta velocity`,
/// then `previous = current`.
pub(crate) fn momentum_in_place(
    current: &mut Array2<Complex64>,
    previous: &mut Array2<Complex64>,
    velocity: &mut Array2<Complex64>,
    eta: f64,
) {
    Zip::from(current)
        .and(previous)
        .and(velocity)
        .for_each(|c, p, v| {
            *v = *v * eta + (*c - *p);
            *c += *v * eta;
            *p = *c;
        });
}

/// Applies the momentum step independently to the wavefront and the
/// diffuser. Returns the extrapolated `(W, D)` and the new velocities.
pub fn momentum_step(
    current: (&ComplexField, &ComplexField),
    previous: (&ComplexField, &ComplexField),
    velocity: (&ComplexField, &ComplexField),
    eta: f64,
) -> Result<((ComplexField, ComplexField), (ComplexField, ComplexField))> {
    let step = |c: &ComplexField, p: &ComplexField, v: &ComplexField| -> Result<_> {
        c.ensure_same_grid(p)?;
        c.ensure_same_grid(v)?;
        let mut cur = c.data().clone();
        let mut prev = p.data().clone();
        let mut vel = v.data().clone();
        momentum_in_place(&mut cur, &mut prev, &mut vel, eta);
        Ok((
            ComplexField::from_parts(cur, c.pixel_pitch()),
            ComplexField::from_parts(vel, c.pixel_pitch()),
        ))
    };
    let (w, vw) = step(current.0, previous.0, velocity.0)?;
    let (d, vd) = step(current.1, previous.1, velocity.1)?;
    Ok(((w, d), (vw, vd)))
}
