//! Ground-truth generation: objects, diffusers, scan sequences and synthetic
//! measurement stacks.

mod diffuser;
mod measure;
mod scan;
mod target;

pub use diffuser::{make_diffuser, DiffuserKind, DiffuserSpec};
pub use measure::{
    bin_measurements, forward_measure, forward_measure_with_margin, MeasurementSet, NoiseSpec,
};
pub use scan::{make_scan, DiffuserFrame, ScanExtent, ScanSequence, DEFAULT_DIFFUSER_MARGIN};
pub use target::{
    bar_layout, make_target, phase_delay, random_spheres, synthesize_exit_wave, BarGroup, Disc,
    Orientation, Sphere, TargetSpec,
};

pub(crate) use measure::ForwardModel;
