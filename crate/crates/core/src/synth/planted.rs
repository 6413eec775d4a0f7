//! Auto-labelling fixture with planted damage and cluster-separable
//! features.
//!
//! Each frame is a rendered scene whose damage boxes are the detector
//! proposals, plus one decoy proposal on bare road. A stand-in feature
//! extractor gives every crop a noisy copy of its class centre: planted
//! proposals get their damage class, while decoys, sampler boxes and the
//! negative references get the background centre. The expected labels are
//! therefore exactly the planted boxes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{render_scene, SceneSpec};
use super::{alligator_scene, crack_scene, pothole_scene};
use crate::autolabel::{compute_descriptor, propose_candidates, AutoLabelParams, BoxStats, Label, PoolItem, Pools};
use crate::error::{Error, Result};
use crate::io::{
    write_detections, write_jsonl, write_mask, write_rgb, FeatureRecord, FrameRecord, LabelRecord, PoolEntry,
    PoolsFile, RunManifest, RunOverrides,
};
use crate::pipeline::{frame_seed, Detection};
use crate::raster::{BinaryMask, RgbImage};
use crate::segment::{DamageClass, PixelBox};

const FEATURE_DIM: usize = 6;
const CENTRE_SCALE: f64 = 10.0;
const FEATURE_NOISE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PlantedFrame {
    pub image: RgbImage,
    pub road: BinaryMask,
    /// Planted damage boxes first, then the decoy.
    pub proposals: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub frames: Vec<PlantedFrame>,
    pub intrinsics: crate::geometry::CameraIntrinsics,
    pub camera_height: f64,
    pub references: Vec<(PoolEntry, RgbImage)>,
    pub pools: Pools,
    pub stats: BoxStats,
    pub features: HashMap<String, Vec<f64>>,
    pub params: AutoLabelParams,
    pub seed: u64,
    pub expected: Vec<LabelRecord>,
}

/// Paths written by [`PlantedFixture::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPaths {
    pub manifest: PathBuf,
    pub pools: PathBuf,
    pub features: PathBuf,
    pub expected: PathBuf,
}

fn centre(label: Label) -> usize {
    match label {
        Label::Damage(c) => DamageClass::ALL.iter().position(|&k| k == c).expect("known class"),
        Label::Negative => DamageClass::ALL.len(),
    }
}

struct Extractor {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Extractor {
    fn features(&mut self, label: Label) -> Vec<f64> {
        let c = centre(label);
        (0..FEATURE_DIM)
            .map(|i| if i == c { CENTRE_SCALE } else { 0.0 } + self.noise.sample(&mut self.rng))
            .collect()
    }
}

/// Decoy proposal on bare road near the bottom-left of the frame.
fn decoy(width: usize, height: usize) -> PixelBox {
    PixelBox::new(width / 4, height - height / 8 - 10, width / 16, height / 12)
}

/// Builds the fixture: one frame each for a pothole, a crack and an
/// alligator patch, references cut from a second rendering of the same
/// scenes (different noise seed) and from bare road.
pub fn planted_fixture(seed: u64) -> Result<PlantedFixture> {
    let scenes = [pothole_scene(), crack_scene(), alligator_scene()];
    let params = AutoLabelParams::default();
    let mut extractor = Extractor {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0xFEA7),
        noise: Normal::new(0.0, FEATURE_NOISE).expect("positive sigma"),
    };
    let mut features = HashMap::new();
    let mut references = Vec::new();
    let mut positives: BTreeMap<DamageClass, Vec<PoolItem>> = BTreeMap::new();
    let mut negatives = Vec::new();
    let mut positive_boxes = Vec::new();

    let mut add_reference = |id: String,
                             class: Option<DamageClass>,
                             crop: RgbImage,
                             features: &mut HashMap<String, Vec<f64>>,
                             extractor: &mut Extractor|
     -> Result<()> {
        let label = class.map_or(Label::Negative, Label::Damage);
        let f = extractor.features(label);
        let item = PoolItem {
            id: id.clone(),
            descriptor: compute_descriptor(&crop)?,
            features: f.clone(),
        };
        match class {
            Some(c) => positives.entry(c).or_default().push(item),
            None => negatives.push(item),
        }
        features.insert(id.clone(), f);
        references.push((
            PoolEntry {
                crop_id: id.clone(),
                class,
                image: PathBuf::from(format!("ref_{id}.png")),
                bbox: None,
            },
            crop,
        ));
        Ok(())
    };

    for (r, scene) in scenes.iter().enumerate() {
        let rendered = render_scene(&SceneSpec {
            seed: scene.seed.wrapping_add(1000),
            ..scene.clone()
        })?;
        for (j, d) in rendered.detections.iter().enumerate() {
            let b = d.bbox;
            add_reference(
                format!("pos{r}_{j}"),
                Some(d.class),
                rendered.image.crop(b.x, b.y, b.w, b.h)?,
                &mut features,
                &mut extractor,
            )?;
            positive_boxes.push(b);
        }
    }
    let bare = render_scene(&SceneSpec {
        seed: seed.wrapping_add(77),
        ..SceneSpec::default()
    })?;
    let (w, h) = (bare.image.width(), bare.image.height());
    for (n, x) in [w / 3, w / 2, 2 * w / 3].into_iter().enumerate() {
        let b = PixelBox::new(x - w / 20, h - h / 6, w / 10, h / 12);
        add_reference(
            format!("neg{n}"),
            None,
            bare.image.crop(b.x, b.y, b.w, b.h)?,
            &mut features,
            &mut extractor,
        )?;
    }
    let stats = BoxStats::from_boxes(&positive_boxes)?;

    let mut frames = Vec::new();
    let mut expected = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let rendered = render_scene(scene)?;
        let (w, h) = (rendered.image.width(), rendered.image.height());
        let mut proposals: Vec<Detection> = rendered
            .detections
            .iter()
            .enumerate()
            .map(|(j, d)| Detection {
                bbox: d.bbox,
                class: d.class,
                confidence: 0.9,
                crop_id: format!("f{i}_det{j}"),
            })
            .collect();
        proposals.push(Detection {
            bbox: decoy(w, h),
            class: DamageClass::Pothole,
            confidence: 0.3,
            crop_id: format!("f{i}_det{}", proposals.len()),
        });
        let boxes: Vec<PixelBox> = proposals.iter().map(|d| d.bbox).collect();
        let set = propose_candidates(i, &rendered.road, &boxes, &stats, &params, frame_seed(seed, i))?;
        for cand in &set.candidates {
            let planted = proposals
                .iter()
                .take(rendered.detections.len())
                .find(|d| d.crop_id == cand.id);
            let label = planted.map_or(Label::Negative, |d| Label::Damage(d.class));
            features.insert(cand.id.clone(), extractor.features(label));
            if let Some(d) = planted {
                expected.push(LabelRecord {
                    frame: i,
                    crop_id: d.crop_id.clone(),
                    bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                    class: label,
                });
            }
        }
        frames.push(PlantedFrame {
            image: rendered.image,
            road: rendered.road,
            proposals,
        });
    }

    Ok(PlantedFixture {
        frames,
        intrinsics: scenes[0].intrinsics,
        camera_height: scenes[0].camera_height,
        references,
        pools: Pools { positives, negatives },
        stats,
        features,
        params,
        seed,
        expected,
    })
}

impl PlantedFixture {
    /// Writes frames, proposals, `manifest.json`, `pools.json` with its
    /// reference crops, `features.jsonl` and `expected_labels.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PlantedPaths> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::ingest(dir, e))?;
        let mut records = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            let rec = FrameRecord {
                image: format!("frame{i:03}.png").into(),
                depth: None,
                road: format!("frame{i:03}_road.png").into(),
                marking: None,
                detections: Some(format!("frame{i:03}_proposals.jsonl").into()),
                timestamp: i as f64,
            };
            write_rgb(dir.join(&rec.image), &f.image)?;
            write_mask(dir.join(&rec.road), &f.road)?;
            write_detections(dir.join(rec.detections.as_ref().expect("set above")), &f.proposals)?;
            records.push(rec);
        }
        let manifest = RunManifest {
            frames: records,
            intrinsics: self.intrinsics,
            camera_height: self.camera_height,
            scaled: false,
            gps: None,
            overrides: RunOverrides {
                autolabel: Some(self.params),
                ..Default::default()
            },
            seed: self.seed,
            base: PathBuf::new(),
        };
        let mut file = PoolsFile::default();
        for (entry, crop) in &self.references {
            write_rgb(dir.join(&entry.image), crop)?;
            if entry.class.is_some() {
                file.positives.push(entry.clone());
            } else {
                file.negatives.push(entry.clone());
            }
        }
        file.box_stats = Some(self.stats.pairs().to_vec());
        let mut table: Vec<FeatureRecord> = self
            .features
            .iter()
            .map(|(k, v)| FeatureRecord {
                crop_id: k.clone(),
                features: v.clone(),
            })
            .collect();
        table.sort_by(|a, b| a.crop_id.cmp(&b.crop_id));

        let paths = PlantedPaths {
            manifest: dir.join("manifest.json"),
            pools: dir.join("pools.json"),
            features: dir.join("features.jsonl"),
            expected: dir.join("expected_labels.jsonl"),
        };
        let json = |p: &Path, text: String| fs::write(p, text + "\n").map_err(|e| Error::ingest(p, e));
        json(
            &paths.manifest,
            serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
        )?;
        json(
            &paths.pools,
            serde_json::to_string_pretty(&file).expect("pools serialise"),
        )?;
        write_jsonl(&paths.features, &table)?;
        write_jsonl(&paths.expected, &self.expected)?;
        Ok(paths)
    }
}
