use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::sha256_hex;
use super::field::{read_field, write_field};
use crate::error::{Error, Result};
use crate::field::{ComplexField, OpticalConfig};
use crate::simulator::DiffuserFrame;
use crate::solver::{ConvergenceTrace, GuardStats, SolveResult, SolverParams};

pub const RESULT_SCHEMA_VERSION: u32 = 1;
pub const RESULT_FILE: &str = "result.json";
pub const WAVEFRONT_FILE: &str = "wavefront.psmf";
pub const DIFFUSER_FILE: &str = "diffuser.psmf";

/// `result.json` of a reconstruction directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultManifest {
    pub schema_version: u32,
    pub params: SolverParams,
    /// Optics of the reconstruction grid.
    pub config: OpticalConfig,
    pub frame: DiffuserFrame,
    pub data_error: Vec<f64>,
    pub wall_time: Vec<f64>,
    pub initial_error: f64,
    pub guards: GuardStats,
    /// SHA-256 of the input `manifest.json`.
    pub input_manifest_sha256: String,
    /// Number of measurements actually used.
    pub measurements_used: usize,
    pub wavefront_sha256: String,
    pub diffuser_sha256: String,
}

impl ResultManifest {
    pub fn trace(&self) -> ConvergenceTrace {
        ConvergenceTrace {
            data_error: self.data_error.clone(),
            wall_time: self.wall_time.clone(),
        }
    }
}

pub fn write_result(
    dir: impl AsRef<Path>,
    result: &SolveResult,
    input_manifest_sha256: &str,
    measurements_used: usize,
) -> Result<ResultManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_field(dir.join(WAVEFRONT_FILE), &result.wavefront)?;
    write_field(dir.join(DIFFUSER_FILE), &result.diffuser)?;
    let manifest = ResultManifest {
        schema_version: RESULT_SCHEMA_VERSION,
        params: result.params.clone(),
        config: result.config,
        frame: result.frame,
        data_error: result.trace.data_error.clone(),
        wall_time: result.trace.wall_time.clone(),
        initial_error: result.initial_error,
        guards: result.guards,
        input_manifest_sha256: input_manifest_sha256.to_string(),
        measurements_used,
        wavefront_sha256: sha256_hex(&fs::read(dir.join(WAVEFRONT_FILE))?),
        diffuser_sha256: sha256_hex(&fs::read(dir.join(DIFFUSER_FILE))?),
    };
    fs::write(dir.join(RESULT_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct SavedResult {
    pub wavefront: ComplexField,
    pub diffuser: ComplexField,
    pub manifest: ResultManifest,
}

pub fn read_result(dir: impl AsRef<Path>) -> Result<SavedResult> {
    let dir = dir.as_ref();
    let path = dir.join(RESULT_FILE);
    let manifest: ResultManifest =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.schema_version != RESULT_SCHEMA_VERSION {
        return Err(Error::format(&path, format!("unsupported schema version {}", manifest.schema_version)));
    }
    let wavefront = read_field(dir.join(WAVEFRONT_FILE))?;
    let diffuser = read_field(dir.join(DIFFUSER_FILE))?;
    if wavefront.dim() != manifest.config.dim() || diffuser.dim() != manifest.frame.dim() {
        return Err(Error::format(&path, "stored fields do not match the recorded grids"));
    }
    Ok(SavedResult {
        wavefront,
        diffuser,
        manifest,
    })
}
