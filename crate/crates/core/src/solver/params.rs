use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    Sequential,
    /// A fresh permutation each sweep, derived from `(seed, sweep)`.
    Shuffled { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumMode {
    PerSweep,
    PerMeasurement,
}

/// Which factor normalizes the diffuser correction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffuserUpdate {
    /// rPIE form: `conj(W') / ((1 - a) |W'|^2 + a max |W'|^2)`.
    Corrected,
    /// The layout's literal form with `conj(D_j)` and `|D_j|`. Kept for
    /// comparison; it does not converge in general.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitAmplitude {
    /// `sqrt(mean_j I_j)`
    IntensityMean,
    /// `mean_j sqrt(I_j)`
    AmplitudeMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Number of full sweeps over the measurement set.
    pub iterations: usize,
    /// Spectrum update step.
    pub beta_phi: f64,
    /// rPIE regularizer of the wavefront update.
    pub alpha_obj: f64,
    /// rPIE regularizer of the diffuser update.
    pub alpha_d: f64,
    pub momentum_eta: f64,
    pub momentum_enabled: bool,
    pub momentum_mode: MomentumMode,
    pub sweep_order: SweepOrder,
    /// Denominator floor. `None` uses `1e-12 * max_j max(I_j)`.
    pub epsilon_guard: Option<f64>,
    pub diffuser_update: DiffuserUpdate,
    pub init_amplitude: InitAmplitude,
    /// Integer refinement of the reconstruction grid over the camera grid.
    pub upsample: usize,
    /// Keep the diffuser fixed (for reconstructions with a known diffuser).
    pub freeze_diffuser: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            iterations: 25,
            beta_phi: 1.0,
            alpha_obj: 0.1,
            alpha_d: 0.25,
            momentum_eta: 0.7,
            momentum_enabled: true,
            momentum_mode: MomentumMode::PerSweep,
            sweep_order: SweepOrder::Shuffled { seed: 0 },
            epsilon_guard: None,
            diffuser_update: DiffuserUpdate::Corrected,
            init_amplitude: InitAmplitude::IntensityMean,
            upsample: 1,
            freeze_diffuser: false,
        }
    }
}

impl SolverParams {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.beta_phi.is_finite() && self.beta_phi > 0.0) {
            return bad("beta_phi must be > 0");
        }
        if !(self.alpha_obj > 0.0 && self.alpha_obj <= 1.0) {
            return bad("alpha_obj must lie in (0, 1]");
        }
        if !(self.alpha_d > 0.0 && self.alpha_d <= 1.0) {
            return bad("alpha_d must lie in (0, 1]");
        }
        if !(self.momentum_eta >= 0.0 && self.momentum_eta < 1.0) {
            return bad("momentum_eta must lie in [0, 1)");
        }
        if let Some(eps) = self.epsilon_guard {
            if !(eps.is_finite() && eps > 0.0) {
                return bad("epsilon_guard must be > 0");
            }
        }
        if self.upsample == 0 {
            return bad("upsample must be >= 1");
        }
        Ok(())
    }

    /// Guard value for a measurement stack with peak intensity `max_intensity`.
    pub fn guard_for(&self, max_intensity: f64) -> f64 {
        self.epsilon_guard
            .unwrap_or_else(|| (1e-12 * max_intensity).max(f64::MIN_POSITIVE))
    }
}
