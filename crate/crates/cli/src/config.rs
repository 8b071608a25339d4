use std::fs;
use std::path::{Path, PathBuf};

use psm_core::analysis::{Region, TracePath};
use psm_core::simulator::{bar_layout, DiffuserFrame, DiffuserSpec, NoiseSpec, TargetSpec, DEFAULT_DIFFUSER_MARGIN};
use psm_core::solver::SolverParams;
use psm_core::OpticalConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub count: usize,
    /// Inclusive range of integer steps between consecutive positions.
    pub step_min: u32,
    pub step_max: u32,
    pub seed: u64,
    #[serde(default = "default_margin")]
    pub margin: usize,
}

fn default_margin() -> usize {
    DEFAULT_DIFFUSER_MARGIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationConfig {
    /// Meters.
    pub min_separation: f64,
    /// Fraction of the stack median intensity.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseTraceConfig {
    pub path: TracePath,
    pub background: Region,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Refocus planes in meters, strictly increasing.
    #[serde(default)]
    pub z_list: Vec<f64>,
    #[serde(default)]
    pub localization: Option<LocalizationConfig>,
    #[serde(default)]
    pub phase_trace: Option<PhaseTraceConfig>,
}

/// A complete experiment: optics, ground truth, acquisition, solver and
/// analysis settings. Lengths are in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub optical: OpticalConfig,
    pub target: TargetSpec,
    pub diffuser: DiffuserSpec,
    pub scan: ScanConfig,
    #[serde(default = "NoiseSpec::noiseless")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::ConfigSyntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Input(format!("cannot serialize config: {e}")))
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_toml(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `output_dir`, rebased onto the directory of `config_path` when relative.
    pub fn output_path(&self, config_path: &Path) -> PathBuf {
        if self.output_dir.is_relative() {
            config_path.parent().unwrap_or(Path::new("")).join(&self.output_dir)
        } else {
            self.output_dir.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.optical.validate()?;
        if self.scan.count == 0 {
            return bad("scan.count must be at least 1".into());
        }
        if self.scan.step_min > self.scan.step_max {
            return bad("scan.step_min exceeds scan.step_max".into());
        }
        // the diffuser grid grows with the scan, so check the bandwidth there
        let frame = DiffuserFrame::for_scan(
            self.optical.dim(),
            &psm_core::simulator::make_scan(self.scan.count, (self.scan.step_min, self.scan.step_max), self.scan.seed)?,
            self.scan.margin,
        );
        self.diffuser.validate(&frame.config(&self.optical))?;
        self.noise.validate()?;
        self.solver.validate()?;
        if self.solver.upsample != 1 {
            return bad("solver.upsample must be 1 for simulated datasets on the object grid".into());
        }
        check_target(&self.target, &self.optical)?;
        if let Some(loc) = &self.analysis.localization {
            if !(loc.min_separation >= 2.0 * self.optical.pixel_pitch) {
                return bad("analysis.localization.min_separation must be at least two pixels".into());
            }
            if !(loc.threshold > 0.0 && loc.threshold.is_finite()) {
                return bad("analysis.localization.threshold must be positive".into());
            }
        }
        if self.analysis.z_list.windows(2).any(|p| p[1] <= p[0]) || self.analysis.z_list.iter().any(|z| !z.is_finite()) {
            return bad("analysis.z_list must be finite and strictly increasing".into());
        }
        Ok(())
    }
}

fn check_target(target: &TargetSpec, optical: &OpticalConfig) -> Result<()> {
    match target {
        TargetSpec::UsafBars {
            linewidths,
            region,
            orientation,
        } => {
            bar_layout(linewidths, *region, *orientation, optical)?;
        }
        TargetSpec::PhaseDisc { .. } => {
            psm_core::simulator::make_target(target, optical)?;
        }
        TargetSpec::TwoLayer { first, second, gap } => {
            if !(gap.is_finite() && *gap > 0.0) {
                return Err(CliError::Input("two-layer gap must be positive".into()));
            }
            check_target(first, optical)?;
            check_target(second, optical)?;
        }
        TargetSpec::SphereVolume {
            thickness,
            slice_thickness,
            ..
        } => {
            if !(*thickness > 0.0 && *slice_thickness > 0.0 && slice_thickness <= thickness) {
                return Err(CliError::Input(
                    "sphere volume needs 0 < slice_thickness <= thickness".into(),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const MINIMAL: &str = r#"
schema_version = 1
output_dir = "data"

[optical]
wavelength = 5.32e-7
objective_na = 0.1
diffuser_distance = 5e-5
pixel_pitch = 5e-7
grid_height = 64
grid_width = 64

[target]
kind = "usaf_bars"
linewidths = [2e-6, 1e-6]

[diffuser]
kind = "random_phase_smooth"
feature_size = 1.5e-6
phase_depth = 2.0
seed = 3

[scan]
count = 4
step_min = 1
step_max = 2
seed = 1
"#;

    #[test]
    fn minimal_config_parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("x.toml")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scan.margin, DEFAULT_DIFFUSER_MARGIN);
        assert_eq!(cfg.noise, NoiseSpec::noiseless());
        assert_eq!(cfg.solver, SolverParams::default());
    }

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("x.toml")).unwrap();
        cfg.noise = NoiseSpec::shot(1e4, 9);
        cfg.solver.epsilon_guard = Some(1e-9);
        cfg.analysis.z_list = vec![-1e-4, 0.0, 3.2e-4];
        cfg.analysis.phase_trace = Some(PhaseTraceConfig {
            path: TracePath::Segment {
                start: [1e-6, 2e-6],
                end: [3e-6, 2e-6],
            },
            background: [0.0, 0.0, 4e-6, 4e-6],
        });
        cfg.target = TargetSpec::TwoLayer {
            first: Box::new(cfg.target.clone()),
            second: Box::new(cfg.target.clone()),
            gap: 3.2e-4,
        };
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("count = 4", "count = 4\ncuont = 5");
        assert!(ExperimentConfig::from_toml(&text, Path::new("x.toml")).is_err());
    }

    #[test]
    fn unrepresentable_diffuser_names_the_constraint() {
        let text = MINIMAL.replace("feature_size = 1.5e-6", "feature_size = 3e-7");
        let cfg = ExperimentConfig::from_toml(&text, Path::new("x.toml")).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("feature size"), "{msg}");
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        let cfg = ExperimentConfig::from_toml(&text, Path::new("x.toml")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
