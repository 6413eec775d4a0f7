use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autolabel::{Candidate, CandidateSource, Label, LabeledBox};
use crate::error::{Error, Result};
use crate::pipeline::{Detection, ReportRow};
use crate::segment::{DamageClass, PixelBox};

/// Column order of the damage report.
pub const REPORT_HEADER: [&str; 14] = [
    "frame",
    "class",
    "x",
    "y",
    "w",
    "h",
    "area_m2",
    "length_m",
    "crack_density_pct",
    "depth_class",
    "risk",
    "level",
    "lat",
    "lon",
];

fn to_box(b: [usize; 4]) -> PixelBox {
    PixelBox::new(b[0], b[1], b[2], b[3])
}

fn from_box(b: &PixelBox) -> [usize; 4] {
    [b.x, b.y, b.w, b.h]
}

/// One detection line: `{"box":[x,y,w,h],"class":…,"confidence":…,"crop_id":…}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
    pub class: DamageClass,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
    pub crop_id: String,
}

fn full_confidence() -> f64 {
    1.0
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: from_box(&d.bbox),
            class: d.class,
            confidence: d.confidence,
            crop_id: d.crop_id.clone(),
        }
    }
}

impl From<DetectionRecord> for Detection {
    fn from(r: DetectionRecord) -> Self {
        Self {
            bbox: to_box(r.bbox),
            class: r.class,
            confidence: r.confidence,
            crop_id: r.crop_id,
        }
    }
}

/// One feature-table line: `{"crop_id":…,"features":[…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub crop_id: String,
    pub features: Vec<f64>,
}

/// One labels-file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub frame: usize,
    pub crop_id: String,
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
    pub class: Label,
}

impl LabelRecord {
    pub fn new(frame: usize, b: &LabeledBox) -> Self {
        Self {
            frame,
            crop_id: b.id.clone(),
            bbox: from_box(&b.bbox),
            class: b.label,
        }
    }
}

/// One candidate line, listed so that features can be extracted for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub frame: usize,
    pub crop_id: String,
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
    pub source: CandidateSource,
}

impl CandidateRecord {
    pub fn new(frame: usize, c: &Candidate) -> Self {
        Self {
            frame,
            crop_id: c.id.clone(),
            bbox: from_box(&c.bbox),
            source: c.source,
        }
    }
}

/// Parses JSON Lines, skipping blank lines. A malformed line is fatal and
/// the error names the file and the 0-based record index.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::ingest(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| Error::ingest(path, format!("record {i}: {e}"))))
        .collect()
}

/// Serialises records one per line, with a trailing newline after each.
pub fn jsonl_string<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, jsonl_string(records)).map_err(|e| Error::ingest(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let records: Vec<DetectionRecord> = read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(Error::ingest(
                path,
                format!("record {i}: confidence {} outside [0, 1]", r.confidence),
            ));
        }
    }
    Ok(records.into_iter().map(Detection::from).collect())
}

pub fn write_detections(path: impl AsRef<Path>, detections: &[Detection]) -> Result<()> {
    let records: Vec<DetectionRecord> = detections.iter().map(DetectionRecord::from).collect();
    write_jsonl(path, &records)
}

/// Reads a feature table. Ids must be unique and every vector finite and of
/// the same dimension.
pub fn read_features(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let records: Vec<FeatureRecord> = read_jsonl(path)?;
    let dim = records.first().map(|r| r.features.len());
    let mut table = HashMap::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        if Some(r.features.len()) != dim || r.features.is_empty() {
            return Err(Error::ingest(
                path,
                format!(
                    "record {i}: feature dimension {} differs from {}",
                    r.features.len(),
                    dim.unwrap_or(0)
                ),
            ));
        }
        if r.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::ingest(path, format!("record {i}: non-finite feature")));
        }
        if table.insert(r.crop_id.clone(), r.features).is_some() {
            return Err(Error::ingest(
                path,
                format!("record {i}: duplicate crop id `{}`", r.crop_id),
            ));
        }
    }
    Ok(table)
}

/// CSV text of the report, header included even when there are no rows.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(format!("report CSV: {e}"));
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("report CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV is UTF-8"))
}

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let path = path.as_ref();
    let text = report_csv(rows)?;
    let mut f = fs::File::create(path).map_err(|e| Error::ingest(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::ingest(path, e))
}

/// Parses a report written by [`write_report`].
pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::ingest(path, e))?;
    let header = rdr.headers().map_err(|e| Error::ingest(path, e))?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::ingest(path, "unexpected report header"));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::ingest(path, format!("row {i}: {e}"))))
        .collect()
}
