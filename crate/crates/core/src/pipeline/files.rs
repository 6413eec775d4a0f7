//! Manifest-driven runs: ingestion, processing and output files.

use std::fs;
use std::path::Path;

use super::{assemble, frame_seed, ordered_map, quantify_frame, Detection, FrameData, FrameOutcome, RunOutput};
use crate::autolabel::{auto_label, propose_candidates, BoxStats, Pools};
use crate::error::{Error, Result};
use crate::geomap::{read_gps_csv, GpsSample};
use crate::io::{
    check_paths, read_detections, read_features, read_manifest, read_mask, read_pfm, read_pools, read_rgb, write_jsonl,
    write_report, CandidateRecord, LabelRecord, RunManifest,
};
use crate::segment::PixelBox;

/// Command-line overrides applied on top of the manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub mpp: Option<f64>,
    pub camera_height: Option<f64>,
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    pub jobs: usize,
}

/// Loads frame `index`. The depth raster is only read when `with_depth`;
/// otherwise an all-invalid placeholder of the image's size stands in.
pub fn load_frame(m: &RunManifest, index: usize, with_depth: bool) -> Result<FrameData> {
    let detections = frame_detections(m, index)?;
    load_rasters(m, index, with_depth, detections)
}

fn frame_detections(m: &RunManifest, index: usize) -> Result<Vec<Detection>> {
    match m.frames[index].detections.as_deref() {
        Some(p) => read_detections(m.resolve(p)),
        None => Ok(Vec::new()),
    }
}

fn load_rasters(m: &RunManifest, index: usize, with_depth: bool, detections: Vec<Detection>) -> Result<FrameData> {
    let rec = &m.frames[index];
    let image = read_rgb(m.resolve(&rec.image))?;
    let depth = if with_depth {
        let p = rec
            .depth
            .as_deref()
            .ok_or_else(|| Error::Data(format!("frame {index} has no depth raster")))?;
        read_pfm(m.resolve(p), m.scaled)?
    } else {
        crate::geometry::DepthRaster::new(
            image.width(),
            image.height(),
            vec![0.0; image.width() * image.height()],
            m.scaled,
        )?
    };
    let road = read_mask(m.resolve(&rec.road))?;
    let marking = rec.marking.as_deref().map(|p| read_mask(m.resolve(p))).transpose()?;
    Ok(FrameData {
        image,
        depth,
        road,
        marking,
        detections,
        timestamp: rec.timestamp,
    })
}

fn read_track(m: &RunManifest) -> Result<Vec<GpsSample>> {
    match m.gps.as_deref() {
        Some(p) => {
            let path = m.resolve(p);
            let file = fs::File::open(&path).map_err(|e| Error::ingest(&path, e))?;
            read_gps_csv(file).map_err(|e| Error::ingest(&path, e))
        }
        None => Ok(Vec::new()),
    }
}

/// Quantifies every detection of the manifest. Frames are loaded inside
/// the worker pool, so memory holds at most one frame per worker.
pub fn run_quantify(m: &RunManifest, opts: &RunOptions) -> Result<RunOutput> {
    let mut params = m.quant_params();
    if let Some(mpp) = opts.mpp {
        params.view.mpp = mpp;
    }
    if let Some(h) = opts.camera_height {
        params.view.camera_height = h;
    }
    if let Some(s) = opts.seed {
        params.seed = s;
    }
    params.validate()?;
    m.intrinsics.validate()?;
    if let Some(i) = m.frames.iter().position(|f| f.depth.is_none()) {
        return Err(Error::Data(format!("frame {i} has no depth raster")));
    }
    check_paths(&m.referenced_paths(true))?;
    let track = read_track(m)?;

    let per_frame: Vec<(usize, FrameOutcome)> = ordered_map(m.frames.len(), opts.jobs, |i| {
        let detections = frame_detections(m, i)?;
        if detections.is_empty() {
            return Ok((0, FrameOutcome::default()));
        }
        let n = detections.len();
        let frame = load_rasters(m, i, true, detections)?;
        Ok((n, quantify_frame(i, &frame, &m.intrinsics, &params)?))
    })?;
    let detections = per_frame.iter().map(|(n, _)| n).sum();
    let outcomes = per_frame.into_iter().map(|(_, o)| o).collect();
    let times: Vec<f64> = m.frames.iter().map(|f| f.timestamp).collect();
    assemble(&times, outcomes, detections, &track, &params)
}

/// Writes `report.csv`, `damages.geojson` and `summary.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::ingest(dir, e))?;
    write_report(dir.join("report.csv"), &out.rows)?;
    let geo = dir.join("damages.geojson");
    fs::write(&geo, &out.geojson).map_err(|e| Error::ingest(&geo, e))?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&out.summary).expect("summary serialises");
    fs::write(&summary, text + "\n").map_err(|e| Error::ingest(&summary, e))
}

pub fn run_quantify_files(
    manifest: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: &RunOptions,
) -> Result<RunOutput> {
    let m = read_manifest(manifest)?;
    let out = run_quantify(&m, opts)?;
    write_outputs(&out, out_dir)?;
    Ok(out)
}

fn proposals(m: &RunManifest, index: usize) -> Result<Vec<PixelBox>> {
    Ok(frame_detections(m, index)?.into_iter().map(|d| d.bbox).collect())
}

/// The candidates auto-labelling would score, for feature extraction.
pub fn list_candidates(m: &RunManifest, stats: &BoxStats, seed: Option<u64>) -> Result<Vec<CandidateRecord>> {
    check_paths(&m.referenced_paths(false))?;
    let params = m.autolabel_params();
    let seed = seed.unwrap_or(m.seed);
    let per_frame = ordered_map(m.frames.len(), 0, |i| {
        let road = read_mask(m.resolve(&m.frames[i].road))?;
        let set = propose_candidates(i, &road, &proposals(m, i)?, stats, &params, frame_seed(seed, i))?;
        Ok(set
            .candidates
            .iter()
            .map(|c| CandidateRecord::new(i, c))
            .collect::<Vec<_>>())
    })?;
    Ok(per_frame.into_iter().flatten().collect())
}

/// Labels every frame of the manifest and returns the surviving boxes in
/// frame order.
pub fn run_autolabel(
    m: &RunManifest,
    pools: &Pools,
    stats: &BoxStats,
    features: &std::collections::HashMap<String, Vec<f64>>,
    seed: Option<u64>,
) -> Result<Vec<LabelRecord>> {
    check_paths(&m.referenced_paths(false))?;
    let params = m.autolabel_params();
    let seed = seed.unwrap_or(m.seed);
    let per_frame = ordered_map(m.frames.len(), 0, |i| {
        let frame = load_frame(m, i, false)?;
        let boxes: Vec<PixelBox> = frame.detections.iter().map(|d| d.bbox).collect();
        let labels = auto_label(
            &frame.image,
            i,
            &frame.road,
            &boxes,
            stats,
            pools,
            features,
            &params,
            frame_seed(seed, i),
        )
        .map_err(|e| Error::Data(format!("frame {i}: {e}")))?;
        Ok(labels.iter().map(|b| LabelRecord::new(i, b)).collect::<Vec<_>>())
    })?;
    Ok(per_frame.into_iter().flatten().collect())
}

/// Reads the inputs, labels the manifest and writes the labels file. With
/// `list_only` the candidate list is written instead and no features are
/// needed for the unlabelled frames.
pub fn run_autolabel_files(
    manifest: impl AsRef<Path>,
    pools: impl AsRef<Path>,
    features: impl AsRef<Path>,
    out: impl AsRef<Path>,
    seed: Option<u64>,
    list_only: bool,
) -> Result<usize> {
    let m = read_manifest(manifest)?;
    let table = read_features(features)?;
    let (pools, stats) = read_pools(pools, &table)?;
    if list_only {
        let records = list_candidates(&m, &stats, seed)?;
        write_jsonl(out, &records)?;
        Ok(records.len())
    } else {
        let records = run_autolabel(&m, &pools, &stats, &table, seed)?;
        write_jsonl(out, &records)?;
        Ok(records.len())
    }
}
