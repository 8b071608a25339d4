//! Post-reconstruction analysis: refocusing, particle localization and the
//! resolution, phase and registration metrics.

mod localize;
mod metrics;
mod refocus;

pub use localize::{localize_minima, Localization, ParticleLocalization};
pub use metrics::{
    background_phase, bar_contrast, complex_correlation, diffuser_correlation, gauge_register, phase_line_trace,
    phase_to_height, Region, Registration, TracePath, TracePoint, RESOLVED_CONTRAST,
};
pub use refocus::{refocus, PlaneInfo, RefocusStack};
