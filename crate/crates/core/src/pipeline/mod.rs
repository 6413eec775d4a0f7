//! Frame orchestration: segmentation, metric view, quantification, risk and
//! map pins for every detection of every frame.

mod files;

pub use files::{
    list_candidates, load_frame, run_autolabel, run_autolabel_files, run_quantify, run_quantify_files, write_outputs,
    RunOptions,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomap::{export_geojson, interpolate_track, make_pins, GpsSample};
use crate::geometry::{crop_view, fit_ground, CameraIntrinsics, DepthRaster, ViewParams};
use crate::quantify::{
    classify_depth, quantify_view, risk_score, QuantMetrics, RiskScore, RiskThresholds, DEFAULT_DEEP_TOL,
};
use crate::raster::{BinaryMask, RgbImage};
use crate::segment::{segment_damage, DamageClass, DamageCrop, PixelBox, SegParams};

/// One detector output for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: PixelBox,
    pub class: DamageClass,
    pub confidence: f64,
    pub crop_id: String,
}

/// Everything known about one frame.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub image: RgbImage,
    pub depth: DepthRaster,
    pub road: BinaryMask,
    pub marking: Option<BinaryMask>,
    pub detections: Vec<Detection>,
    pub timestamp: f64,
}

/// Tunables of a quantification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantParams {
    pub seg: SegParams,
    pub view: ViewParams,
    pub thresholds: RiskThresholds,
    pub deep_tol: f64,
    pub seed: u64,
}

impl Default for QuantParams {
    fn default() -> Self {
        Self {
            seg: SegParams::default(),
            view: ViewParams::default(),
            thresholds: RiskThresholds::default(),
            deep_tol: DEFAULT_DEEP_TOL,
            seed: 0,
        }
    }
}

impl QuantParams {
    pub fn validate(&self) -> Result<()> {
        self.seg.validate()?;
        self.thresholds.validate()?;
        if !(self.view.mpp > 0.0 && self.view.mpp.is_finite()) {
            return Err(Error::Parameter(format!("mpp must be positive, got {}", self.view.mpp)));
        }
        if !(self.view.camera_height > 0.0 && self.view.camera_height.is_finite()) {
            return Err(Error::Parameter(format!(
                "camera height must be positive, got {}",
                self.view.camera_height
            )));
        }
        if !(self.deep_tol >= 0.0 && self.deep_tol.is_finite()) {
            return Err(Error::Parameter(format!(
                "deep_tol must be non-negative, got {}",
                self.deep_tol
            )));
        }
        Ok(())
    }
}

/// Seed of frame `index`, independent of scheduling order.
pub fn frame_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A quantified damage instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageResult {
    pub frame: usize,
    pub detection: usize,
    pub crop_id: String,
    pub class: DamageClass,
    pub bbox: PixelBox,
    pub metrics: QuantMetrics,
    pub risk: RiskScore,
}

/// A damage left out of the report, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub frame: usize,
    pub detection: Option<usize>,
    pub crop_id: Option<String>,
    pub reason: String,
}

/// Per-frame outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutcome {
    pub damages: Vec<DamageResult>,
    pub skips: Vec<Skip>,
}

fn crop_of(frame: &FrameData, det: &Detection) -> Result<DamageCrop> {
    let b = det.bbox;
    let pixels = frame.image.crop(b.x, b.y, b.w, b.h)?;
    let marking = frame.marking.as_ref().map(|m| m.crop(b.x, b.y, b.w, b.h)).transpose()?;
    DamageCrop::new(pixels, det.class, marking, b)
}

fn quantify_detection(
    frame: &FrameData,
    det: &Detection,
    intr: &CameraIntrinsics,
    ground: &crate::geometry::GroundModel,
    params: &QuantParams,
    view: &ViewParams,
) -> Result<(QuantMetrics, RiskScore)> {
    let crop = crop_of(frame, det)?;
    let mask = segment_damage(&crop, &params.seg)?;
    let cv = crop_view(&frame.depth, intr, &frame.road, ground, &det.bbox, &mask, view)?;
    let depth = if det.class == DamageClass::Pothole {
        Some(classify_depth(&cv.damaged_cloud(), &cv.local_plane, params.deep_tol)?)
    } else {
        None
    };
    let metrics = quantify_view(&cv.topview, det.class, depth)?;
    let risk = risk_score(&metrics, det.class, &params.thresholds)?;
    Ok((metrics, risk))
}

fn validate_frame(index: usize, frame: &FrameData) -> Result<()> {
    let (w, h) = (frame.image.width(), frame.image.height());
    let dims_ok = frame.depth.width() == w
        && frame.depth.height() == h
        && frame.road.same_dims(w, h)
        && frame.marking.as_ref().is_none_or(|m| m.same_dims(w, h));
    if !dims_ok {
        return Err(Error::Data(format!("frame {index}: raster dimensions disagree")));
    }
    for (i, d) in frame.detections.iter().enumerate() {
        if !d.bbox.fits(w, h) || d.bbox.area() == 0 {
            return Err(Error::Data(format!(
                "frame {index}: detection {i} box {:?} leaves the {w}x{h} image",
                d.bbox
            )));
        }
    }
    Ok(())
}

/// Quantifies every detection of one frame. Recoverable per-damage failures
/// become skips; anything else aborts.
pub fn quantify_frame(
    index: usize,
    frame: &FrameData,
    intr: &CameraIntrinsics,
    params: &QuantParams,
) -> Result<FrameOutcome> {
    validate_frame(index, frame)?;
    let mut out = FrameOutcome::default();
    if frame.detections.is_empty() {
        return Ok(out);
    }
    let seed = frame_seed(params.seed, index);
    let view = ViewParams { seed, ..params.view };
    let ground = match fit_ground(&frame.depth, intr, &frame.road, view.camera_height, &view.ransac, seed) {
        Ok(g) => g,
        Err(e) if e.is_recoverable() => {
            for (i, d) in frame.detections.iter().enumerate() {
                out.skips.push(Skip {
                    frame: index,
                    detection: Some(i),
                    crop_id: Some(d.crop_id.clone()),
                    reason: format!("ground fit: {e}"),
                });
            }
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    for (i, det) in frame.detections.iter().enumerate() {
        match quantify_detection(frame, det, intr, &ground, params, &view) {
            Ok((metrics, risk)) => out.damages.push(DamageResult {
                frame: index,
                detection: i,
                crop_id: det.crop_id.clone(),
                class: det.class,
                bbox: det.bbox,
                metrics,
                risk,
            }),
            Err(e) if e.is_recoverable() => out.skips.push(Skip {
                frame: index,
                detection: Some(i),
                crop_id: Some(det.crop_id.clone()),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One CSV report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub frame: usize,
    pub class: DamageClass,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub area_m2: Option<f64>,
    pub length_m: Option<f64>,
    pub crack_density_pct: Option<f64>,
    pub depth_class: Option<crate::quantify::DepthClass>,
    pub risk: f64,
    pub level: crate::quantify::RiskLevel,
    pub lat: f64,
    pub lon: f64,
}

/// Counts and provenance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub detections: usize,
    pub quantified: usize,
    pub skipped: usize,
    pub skips: Vec<Skip>,
    pub params: QuantParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ReportRow>,
    pub damages: Vec<DamageResult>,
    pub geojson: String,
    pub summary: RunSummary,
}

impl RunOutput {
    /// Process exit status: 0 clean, 2 when damages were skipped.
    pub fn exit_code(&self) -> i32 {
        if self.summary.skipped > 0 {
            2
        } else {
            0
        }
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))
}

/// Maps `work` over `0..n` on up to `jobs` threads (0 = all cores). Results
/// keep index order, and when several items fail the lowest index's error
/// is returned, so the outcome never depends on scheduling.
pub(crate) fn ordered_map<T: Send>(n: usize, jobs: usize, work: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = pool(jobs)?.install(|| (0..n).into_par_iter().map(&work).collect());
    results.into_iter().collect()
}

/// Turns per-frame outcomes into report rows, pins and the summary.
fn assemble(
    frame_times: &[f64],
    outcomes: Vec<FrameOutcome>,
    detections: usize,
    track: &[GpsSample],
    params: &QuantParams,
) -> Result<RunOutput> {
    let damages: Vec<DamageResult> = outcomes.iter().flat_map(|o| o.damages.clone()).collect();
    let skips: Vec<Skip> = outcomes.into_iter().flat_map(|o| o.skips).collect();
    let coords = if damages.is_empty() {
        Vec::new()
    } else {
        interpolate_track(track, frame_times).map_err(|e| Error::Data(format!("GPS track: {e}")))?
    };
    let keyed: Vec<_> = damages.iter().map(|d| (d.frame, d.class, d.risk)).collect();
    let pins = make_pins(&keyed, &coords)?;
    let rows = damages
        .iter()
        .zip(&pins)
        .map(|(d, p)| ReportRow {
            frame: d.frame,
            class: d.class,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            area_m2: d.metrics.area_m2,
            length_m: d.metrics.length_m,
            crack_density_pct: d.metrics.crack_density_pct,
            depth_class: d.metrics.depth_class,
            risk: d.risk.value,
            level: d.risk.level,
            lat: p.lat,
            lon: p.lon,
        })
        .collect();
    let summary = RunSummary {
        frames: frame_times.len(),
        detections,
        quantified: damages.len(),
        skipped: skips.len(),
        skips,
        params: *params,
    };
    Ok(RunOutput {
        rows,
        geojson: export_geojson(&pins),
        damages,
        summary,
    })
}

/// Runs in-memory frames with up to `jobs` worker threads (0 = all cores).
/// Output order follows frame index whatever the scheduling.
pub fn quantify_frames(
    frames: &[FrameData],
    intr: &CameraIntrinsics,
    track: &[GpsSample],
    params: &QuantParams,
    jobs: usize,
) -> Result<RunOutput> {
    params.validate()?;
    intr.validate()?;
    let outcomes = ordered_map(frames.len(), jobs, |i| quantify_frame(i, &frames[i], intr, params))?;
    let times: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    let detections = frames.iter().map(|f| f.detections.len()).sum();
    assemble(&times, outcomes, detections, track, params)
}
