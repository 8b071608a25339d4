//! Joint recovery of the exit wavefront and the diffuser from a measurement
//! stack.

mod momentum;
mod params;
mod solve;
mod update;

pub use momentum::momentum_step;
pub use params::{DiffuserUpdate, InitAmplitude, MomentumMode, SolverParams, SweepOrder};
pub use solve::{
    data_error, initialize, solve, solve_with, ConvergenceTrace, ReconstructionGrid, SolveInit,
    SolveResult,
};
pub use update::{inner_update, GuardStats, IterationWorkspace};
