//! On-disk formats: binary fields, measurement and result directories,
//! refocus stacks, localization tables and metric records.

mod dataset;
mod export;
mod field;
mod result;

pub use dataset::{
    read_dataset, sha256_hex, write_dataset, DatasetExtras, DatasetManifest, FileEntry, LoadedDataset,
    DATASET_SCHEMA_VERSION, MANIFEST_FILE, TRUTH_DIFFUSER_FILE, TRUTH_WAVEFRONT_FILE,
};
pub use export::{
    read_localizations, read_metrics, read_stack, write_localizations, write_metrics, write_stack,
    write_stack_manifest, MetricRecord, StackManifest, STACK_FILE,
};
pub use field::{decode_field, decode_image, encode_field, encode_image, read_field, write_field, FIELD_MAGIC};
pub use result::{
    read_result, write_result, ResultManifest, SavedResult, DIFFUSER_FILE, RESULT_FILE, RESULT_SCHEMA_VERSION,
    WAVEFRONT_FILE,
};
