use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::field::{decode_image, encode_image, read_field, write_field};
use crate::error::{Error, Result};
use crate::field::{ComplexField, OpticalConfig};
use crate::simulator::{MeasurementSet, NoiseSpec, ScanSequence};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_WAVEFRONT_FILE: &str = "truth_wavefront.psmf";
pub const TRUTH_DIFFUSER_FILE: &str = "truth_diffuser.psmf";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// `manifest.json` of a measurement directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub count: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub pixel_pitch: f64,
    pub wavelength: f64,
    pub objective_na: f64,
    pub diffuser_distance: f64,
    pub diffuser_margin: usize,
    /// `[x, y]` pixel shifts in acquisition order.
    pub scan: Vec<[f64; 2]>,
    pub noise: NoiseSpec,
    /// Named seeds of the generators that produced the data.
    #[serde(default)]
    pub seeds: serde_json::Map<String, serde_json::Value>,
    pub images: Vec<FileEntry>,
    /// Ground-truth wavefront and diffuser for synthetic sets.
    #[serde(default)]
    pub truth: Vec<FileEntry>,
    /// Free-form echo of whatever configuration produced the set.
    #[serde(default)]
    pub source: serde_json::Value,
}

impl DatasetManifest {
    pub fn config(&self) -> OpticalConfig {
        OpticalConfig {
            wavelength: self.wavelength,
            objective_na: self.objective_na,
            diffuser_distance: self.diffuser_distance,
            pixel_pitch: self.pixel_pitch,
            grid_height: self.grid_height,
            grid_width: self.grid_width,
        }
    }
}

/// Extra provenance written next to the images.
#[derive(Clone, Debug, Default)]
pub struct DatasetExtras {
    pub noise: Option<NoiseSpec>,
    pub seeds: serde_json::Map<String, serde_json::Value>,
    /// Ground-truth `(wavefront, diffuser)`.
    pub truth: Option<(ComplexField, ComplexField)>,
    pub source: serde_json::Value,
}

fn image_name(j: usize) -> String {
    format!("meas_{j:04}.f32")
}

/// Writes a measurement directory and returns the SHA-256 of its manifest.
/// The directory is created if needed; existing files are overwritten.
pub fn write_dataset(dir: impl AsRef<Path>, set: &MeasurementSet, extras: &DatasetExtras) -> Result<String> {
    set.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut images = Vec::with_capacity(set.len());
    for (j, img) in set.images.iter().enumerate() {
        let bytes = encode_image(img);
        let name = image_name(j);
        fs::write(dir.join(&name), &bytes)?;
        images.push(FileEntry {
            name,
            sha256: sha256_hex(&bytes),
        });
    }
    let mut truth = Vec::new();
    if let Some((w, d)) = &extras.truth {
        for (name, f) in [(TRUTH_WAVEFRONT_FILE, w), (TRUTH_DIFFUSER_FILE, d)] {
            write_field(dir.join(name), f)?;
            truth.push(FileEntry {
                name: name.to_string(),
                sha256: sha256_hex(&fs::read(dir.join(name))?),
            });
        }
    }
    let c = set.config;
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        count: set.len(),
        grid_height: c.grid_height,
        grid_width: c.grid_width,
        pixel_pitch: c.pixel_pitch,
        wavelength: c.wavelength,
        objective_na: c.objective_na,
        diffuser_distance: c.diffuser_distance,
        diffuser_margin: set.diffuser_margin,
        scan: set.scan.shifts().to_vec(),
        noise: extras.noise.clone().unwrap_or_else(NoiseSpec::noiseless),
        seeds: extras.seeds.clone(),
        images,
        truth,
        source: extras.source.clone(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// A measurement directory loaded back into memory.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub set: MeasurementSet,
    pub manifest: DatasetManifest,
    pub manifest_sha256: String,
}

impl LoadedDataset {
    /// Ground truth `(wavefront, diffuser)` when the set is synthetic.
    pub fn truth(&self, dir: impl AsRef<Path>) -> Result<Option<(ComplexField, ComplexField)>> {
        if self.manifest.truth.len() < 2 {
            return Ok(None);
        }
        let dir = dir.as_ref();
        Ok(Some((
            read_field(dir.join(TRUTH_WAVEFRONT_FILE))?,
            read_field(dir.join(TRUTH_DIFFUSER_FILE))?,
        )))
    }
}

fn verified(dir: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.name);
    if entry.name.contains(['/', '\\']) || entry.name.starts_with('.') {
        return Err(Error::format(&path, "file names must be plain names inside the directory"));
    }
    let bytes = fs::read(&path)?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Error::format(&path, "checksum does not match the manifest"));
    }
    Ok(bytes)
}

/// Reads and verifies a measurement directory.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path)?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    if manifest.images.len() != manifest.count || manifest.scan.len() != manifest.count {
        return Err(Error::format(&path, "image list, scan and count disagree"));
    }
    let config = manifest.config();
    config.validate().map_err(|e| Error::format(&path, e.to_string()))?;
    let mut images = Vec::with_capacity(manifest.count);
    for entry in &manifest.images {
        let data = verified(dir, entry)?;
        images.push(decode_image(&data, config.dim(), &dir.join(&entry.name))?);
    }
    for entry in &manifest.truth {
        verified(dir, entry)?;
    }
    let scan = ScanSequence::new(manifest.scan.clone()).map_err(|e| Error::format(&path, e.to_string()))?;
    let set = MeasurementSet {
        images,
        scan,
        config,
        diffuser_margin: manifest.diffuser_margin,
    };
    set.validate().map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(LoadedDataset {
        set,
        manifest,
        manifest_sha256: sha256_hex(&bytes),
    })
}
