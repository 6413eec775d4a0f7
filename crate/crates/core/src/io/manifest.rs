use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::rasters::read_rgb;
use crate::autolabel::{compute_descriptor, AutoLabelParams, BoxStats, PoolItem, Pools};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RansacParams, Splat};
use crate::pipeline::QuantParams;
use crate::quantify::RiskThresholds;
use crate::segment::{DamageClass, PixelBox, SegParams};

/// Files of one frame, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub image: PathBuf,
    /// Needed for quantification, not for auto-labelling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    pub road: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marking: Option<PathBuf>,
    /// Detections (or, for auto-labelling, detector proposals). A frame
    /// without the file has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    pub timestamp: f64,
}

/// Parameter overrides. Anything left out keeps its compiled default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seg: Option<SegParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ransac: Option<RansacParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splat: Option<Splat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<RiskThresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deep_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub autolabel: Option<AutoLabelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub frames: Vec<FrameRecord>,
    pub intrinsics: CameraIntrinsics,
    pub camera_height: f64,
    /// Depth rasters are already metric.
    #[serde(default)]
    pub scaled: bool,
    /// `timestamp,lat,lon` CSV track.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps: Option<PathBuf>,
    #[serde(default)]
    pub overrides: RunOverrides,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl RunManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    /// Every path the manifest references, resolved.
    pub fn referenced_paths(&self, with_depth: bool) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for f in &self.frames {
            out.push(self.resolve(&f.image));
            out.push(self.resolve(&f.road));
            if with_depth {
                out.extend(f.depth.as_deref().map(|p| self.resolve(p)));
            }
            out.extend(f.marking.as_deref().map(|p| self.resolve(p)));
            out.extend(f.detections.as_deref().map(|p| self.resolve(p)));
        }
        if with_depth {
            out.extend(self.gps.as_deref().map(|p| self.resolve(p)));
        }
        out
    }

    /// Effective quantification parameters: compiled defaults, then the
    /// manifest's overrides, camera height and seed.
    pub fn quant_params(&self) -> QuantParams {
        let mut p = QuantParams::default();
        let o = &self.overrides;
        if let Some(seg) = o.seg {
            p.seg = seg;
        }
        if let Some(mpp) = o.mpp {
            p.view.mpp = mpp;
        }
        if let Some(r) = o.ransac {
            p.view.ransac = r;
        }
        if let Some(s) = o.splat {
            p.view.splat = s;
        }
        if let Some(t) = o.thresholds {
            p.thresholds = t;
        }
        if let Some(d) = o.deep_tol {
            p.deep_tol = d;
        }
        p.view.camera_height = self.camera_height;
        p.seed = self.seed;
        p
    }

    pub fn autolabel_params(&self) -> AutoLabelParams {
        self.overrides.autolabel.unwrap_or_default()
    }
}

/// Reads a manifest and checks that its timestamps are non-decreasing.
/// Paths are not opened here; see [`check_paths`].
pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::ingest(path, e))?;
    let mut m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::ingest(path, e))?;
    m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for (i, w) in m.frames.windows(2).enumerate() {
        if !(w[1].timestamp >= w[0].timestamp) {
            return Err(Error::ingest(
                path,
                format!(
                    "frame {} timestamp {} precedes frame {i}'s {}",
                    i + 1,
                    w[1].timestamp,
                    w[0].timestamp
                ),
            ));
        }
    }
    if m.frames.iter().any(|f| !f.timestamp.is_finite()) {
        return Err(Error::ingest(path, "non-finite frame timestamp"));
    }
    Ok(m)
}

/// Fails on the first referenced path that does not exist.
pub fn check_paths(paths: &[PathBuf]) -> Result<()> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Error::ingest(p, "referenced file not found")),
        None => Ok(()),
    }
}

/// A reference crop in a pools file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    /// Key into the feature table.
    pub crop_id: String,
    /// Omitted for negatives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<DamageClass>,
    pub image: PathBuf,
    /// Region of `image`; the whole image when absent.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[usize; 4]>,
}

/// Labelled reference data for auto-labelling.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolsFile {
    pub positives: Vec<PoolEntry>,
    pub negatives: Vec<PoolEntry>,
    /// `(area px², aspect w/h)` pairs for the box sampler. Harvested from the
    /// positive boxes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_stats: Option<Vec<(f64, f64)>>,
}

/// Reads a pools file, computes each reference crop's descriptor and
/// attaches its feature vector from `features`.
pub fn read_pools(path: impl AsRef<Path>, features: &HashMap<String, Vec<f64>>) -> Result<(Pools, BoxStats)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::ingest(path, e))?;
    let file: PoolsFile = serde_json::from_str(&text).map_err(|e| Error::ingest(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut images = HashMap::new();
    let mut load = |entry: &PoolEntry| -> Result<(PoolItem, PixelBox)> {
        let img_path = base.join(&entry.image);
        if !images.contains_key(&img_path) {
            images.insert(img_path.clone(), read_rgb(&img_path)?);
        }
        let img = &images[&img_path];
        let b = entry
            .bbox
            .map(|b| PixelBox::new(b[0], b[1], b[2], b[3]))
            .unwrap_or(PixelBox::new(0, 0, img.width(), img.height()));
        let crop = img
            .crop(b.x, b.y, b.w, b.h)
            .map_err(|e| Error::ingest(path, format!("`{}`: {e}", entry.crop_id)))?;
        let descriptor =
            compute_descriptor(&crop).map_err(|e| Error::ingest(path, format!("`{}`: {e}", entry.crop_id)))?;
        let features = features
            .get(&entry.crop_id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("no feature vector for reference crop `{}`", entry.crop_id)))?;
        Ok((
            PoolItem {
                id: entry.crop_id.clone(),
                descriptor,
                features,
            },
            b,
        ))
    };

    let mut positives: BTreeMap<DamageClass, Vec<PoolItem>> = BTreeMap::new();
    let mut positive_boxes = Vec::new();
    for e in &file.positives {
        let class = e
            .class
            .ok_or_else(|| Error::ingest(path, format!("positive `{}` has no class", e.crop_id)))?;
        let (item, b) = load(e)?;
        positives.entry(class).or_default().push(item);
        positive_boxes.push(b);
    }
    let mut negatives = Vec::new();
    for e in &file.negatives {
        if e.class.is_some() {
            return Err(Error::ingest(path, format!("negative `{}` has a class", e.crop_id)));
        }
        negatives.push(load(e)?.0);
    }
    let stats = match file.box_stats {
        Some(pairs) => BoxStats::new(pairs),
        None => BoxStats::from_boxes(&positive_boxes),
    }
    .map_err(|e| Error::ingest(path, e))?;
    Ok((Pools { positives, negatives }, stats))
}
