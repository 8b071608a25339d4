//! Simulation and blind reconstruction toolkit for ptychographic structured
//! modulation microscopy.
//!
//! A thin diffuser placed between the sample and a low-NA objective folds
//! high spatial frequencies of the exit wavefront into the objective
//! passband. Scanning the diffuser and recording intensities lets the
//! [`solver`] jointly recover a super-resolved complex exit wavefront and
//! the diffuser profile. [`simulator`] produces such measurement stacks from
//! known ground truth, [`analysis`] refocuses and scores reconstructions,
//! and [`io`] owns the on-disk formats.

pub mod analysis;
pub mod error;
pub mod field;
pub mod io;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use field::{ComplexField, OpticalConfig};
