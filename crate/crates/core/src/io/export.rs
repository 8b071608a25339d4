use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::sha256_hex;
use super::field::write_field;
use crate::analysis::{Localization, ParticleLocalization, PlaneInfo, RefocusStack};
use crate::error::{Error, Result};
use crate::field::OpticalConfig;

pub const STACK_FILE: &str = "stack.json";

/// `stack.json` of a refocus directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub config: OpticalConfig,
    pub planes: Vec<PlaneInfo>,
    /// Per-plane derived images (for example PNG views) with their scaling.
    #[serde(default)]
    pub views: Vec<serde_json::Value>,
    /// Provenance of the propagated wavefront.
    #[serde(default)]
    pub source: serde_json::Value,
}

/// Writes one PSMFIELD file per plane plus `stack.json`.
pub fn write_stack(dir: impl AsRef<Path>, stack: &RefocusStack) -> Result<StackManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut planes = Vec::with_capacity(stack.len());
    for (k, (z, field)) in stack.planes.iter().enumerate() {
        let file = format!("plane_{k:03}.psmf");
        write_field(dir.join(&file), field)?;
        let sha256 = sha256_hex(&fs::read(dir.join(&file))?);
        planes.push(PlaneInfo { z: *z, file, sha256 });
    }
    let manifest = StackManifest {
        config: stack.config,
        planes,
        views: Vec::new(),
        source: serde_json::Value::Null,
    };
    write_stack_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_stack_manifest(dir: impl AsRef<Path>, manifest: &StackManifest) -> Result<()> {
    fs::write(dir.as_ref().join(STACK_FILE), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn read_stack(dir: impl AsRef<Path>) -> Result<RefocusStack> {
    let dir = dir.as_ref();
    let path = dir.join(STACK_FILE);
    let manifest: StackManifest =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    let planes = manifest
        .planes
        .iter()
        .map(|p| {
            let bytes = fs::read(dir.join(&p.file))?;
            if !p.sha256.is_empty() && sha256_hex(&bytes) != p.sha256 {
                return Err(Error::format(dir.join(&p.file), "checksum does not match the manifest"));
            }
            Ok((p.z, super::field::decode_field(&bytes, &dir.join(&p.file))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RefocusStack {
        planes,
        config: manifest.config,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    x_m: f64,
    y_m: f64,
    z_m: f64,
    score: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// CSV with header `x_m,y_m,z_m,score`.
pub fn write_localizations(path: impl AsRef<Path>, loc: &ParticleLocalization) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for p in &loc.positions {
        w.serialize(CsvRow {
            x_m: p.x,
            y_m: p.y,
            z_m: p.z,
            score: p.score,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    if loc.positions.is_empty() {
        w.write_record(["x_m", "y_m", "z_m", "score"]).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_localizations(path: impl AsRef<Path>) -> Result<ParticleLocalization> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let positions = r
        .deserialize::<CsvRow>()
        .map(|row| {
            row.map(|c| Localization {
                x: c.x_m,
                y: c.y_m,
                z: c.z_m,
                score: c.score,
            })
            .map_err(|e| csv_error(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParticleLocalization { positions })
}

/// One scalar metric with the geometry it was measured on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    #[serde(default)]
    pub geometry: serde_json::Value,
    pub value: f64,
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(records)?)?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::format(path, e.to_string()))
}
