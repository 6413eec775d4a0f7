//! File formats of the command-line runs.
//!
//! Depth is read from little-endian portable float maps, masks from 8-bit
//! PGM or PNG (any nonzero sample is set) and images from PNG or PNM.
//! Detections, feature tables, candidate lists and labels are JSON Lines;
//! manifests and pools files are single JSON documents whose relative paths
//! resolve against the file's own directory. The damage report is CSV with
//! the fixed [`REPORT_HEADER`].

mod manifest;
mod rasters;
mod records;

pub use manifest::{
    check_paths, read_manifest, read_pools, FrameRecord, PoolEntry, PoolsFile, RunManifest, RunOverrides,
};
pub use rasters::{read_mask, read_pfm, read_rgb, write_mask, write_pfm, write_rgb};
pub use records::{
    jsonl_string, read_detections, read_features, read_jsonl, read_report, report_csv, write_detections, write_jsonl,
    write_report, CandidateRecord, DetectionRecord, FeatureRecord, LabelRecord, REPORT_HEADER,
};
