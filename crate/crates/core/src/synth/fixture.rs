//! Rendered scenes persisted in the pipeline's input formats, so that
//! end-to-end tests go through the real ingestion path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scene::{render_scene, SceneSpec};
use super::{alligator_scene, crack_scene, pothole_scene};
use crate::error::{Error, Result};
use crate::io::{write_detections, write_mask, write_pfm, write_rgb, FrameRecord, RunManifest, RunOverrides};
use crate::pipeline::Detection;
use crate::quantify::QuantMetrics;
use crate::segment::DamageClass;

/// A multi-frame fixture: one scene per frame along a straight GPS track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    /// All frames must share intrinsics and camera height.
    pub frames: Vec<SceneSpec>,
    /// Depth gauge applied to every frame, on top of each scene's own.
    pub gauge: f64,
    pub start_time: f64,
    pub frame_interval: f64,
    /// `[lat, lon]` at `start_time`.
    pub origin: [f64; 2],
    /// Degrees moved per second.
    pub velocity: [f64; 2],
    /// Seed written to the manifest.
    pub seed: u64,
    pub overrides: RunOverrides,
}

impl Default for FixtureSpec {
    /// Three frames: a pothole, a crack and an alligator patch.
    fn default() -> Self {
        Self {
            frames: vec![pothole_scene(), crack_scene(), alligator_scene()],
            gauge: 1.0,
            start_time: 0.0,
            frame_interval: 0.5,
            origin: [52.0, 4.0],
            velocity: [1e-4, 5e-5],
            seed: 0,
            overrides: RunOverrides::default(),
        }
    }
}

/// Ground truth of one detection in a written fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTruth {
    pub frame: usize,
    pub detection: usize,
    pub crop_id: String,
    pub class: DamageClass,
    pub metrics: QuantMetrics,
}

/// What [`write_fixture`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFixture {
    pub manifest: PathBuf,
    pub truth: Vec<DetectionTruth>,
}

/// Renders every frame and writes images, PFM depth, masks, detections, a
/// GPS track, `manifest.json` and `truth.json` into `dir`.
pub fn write_fixture(spec: &FixtureSpec, dir: impl AsRef<Path>) -> Result<WrittenFixture> {
    let dir = dir.as_ref();
    let first = spec
        .frames
        .first()
        .ok_or_else(|| Error::Spec("fixture has no frames".into()))?;
    if spec
        .frames
        .iter()
        .any(|f| f.intrinsics != first.intrinsics || f.camera_height != first.camera_height)
    {
        return Err(Error::Spec(
            "fixture frames disagree on intrinsics or camera height".into(),
        ));
    }
    if !(spec.gauge > 0.0 && spec.gauge.is_finite()) {
        return Err(Error::Spec(format!("gauge must be positive, got {}", spec.gauge)));
    }
    if !(spec.frame_interval > 0.0 && spec.frame_interval.is_finite()) {
        return Err(Error::Spec(format!(
            "frame interval must be positive, got {}",
            spec.frame_interval
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::ingest(dir, e))?;

    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (i, scene_spec) in spec.frames.iter().enumerate() {
        let scene = render_scene(&SceneSpec {
            gauge: scene_spec.gauge * spec.gauge,
            ..scene_spec.clone()
        })?;
        let name = |suffix: &str| PathBuf::from(format!("frame{i:03}{suffix}"));
        let rec = FrameRecord {
            image: name(".png"),
            depth: Some(name("_depth.pfm")),
            road: name("_road.png"),
            marking: (!scene_spec.markings.is_empty()).then(|| name("_marking.png")),
            detections: Some(name("_det.jsonl")),
            timestamp: spec.start_time + i as f64 * spec.frame_interval,
        };
        write_rgb(dir.join(&rec.image), &scene.image)?;
        write_pfm(dir.join(rec.depth.as_ref().expect("set above")), &scene.depth)?;
        write_mask(dir.join(&rec.road), &scene.road)?;
        if let Some(m) = &rec.marking {
            write_mask(dir.join(m), &scene.marking)?;
        }
        let detections: Vec<Detection> = scene
            .detections
            .iter()
            .enumerate()
            .map(|(j, d)| Detection {
                bbox: d.bbox,
                class: d.class,
                confidence: 1.0,
                crop_id: format!("f{i}_d{j}"),
            })
            .collect();
        write_detections(dir.join(rec.detections.as_ref().expect("set above")), &detections)?;
        for (j, (d, det)) in scene.detections.iter().zip(&detections).enumerate() {
            truth.push(DetectionTruth {
                frame: i,
                detection: j,
                crop_id: det.crop_id.clone(),
                class: d.class,
                metrics: scene.truth[d.primitive].metrics,
            });
        }
        records.push(rec);
    }

    let end = spec.start_time + spec.frames.len() as f64 * spec.frame_interval;
    let mut gps = String::from("timestamp,lat,lon\n");
    for t in [spec.start_time - spec.frame_interval, end] {
        let dt = t - spec.start_time;
        let (lat, lon) = (
            spec.origin[0] + spec.velocity[0] * dt,
            spec.origin[1] + spec.velocity[1] * dt,
        );
        gps.push_str(&format!("{t},{lat},{lon}\n"));
    }
    let gps_path = dir.join("gps.csv");
    fs::write(&gps_path, gps).map_err(|e| Error::ingest(&gps_path, e))?;

    let manifest = RunManifest {
        frames: records,
        intrinsics: first.intrinsics,
        camera_height: first.camera_height,
        scaled: false,
        gps: Some(PathBuf::from("gps.csv")),
        overrides: spec.overrides,
        seed: spec.seed,
        base: PathBuf::new(),
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::ingest(&manifest_path, e))?;
    let truth_path = dir.join("truth.json");
    let text = serde_json::to_string_pretty(&truth).expect("truth serialises");
    fs::write(&truth_path, text + "\n").map_err(|e| Error::ingest(&truth_path, e))?;

    Ok(WrittenFixture {
        manifest: manifest_path,
        truth,
    })
}
