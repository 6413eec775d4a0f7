//! Auto-labelling of unlabelled frames.
//!
//! Candidates come from detector proposals and from a bounding-box sampler
//! that draws road boxes shaped like the labelled data. Each candidate crop
//! gets a colour/gradient histogram descriptor, which picks a support set of
//! the most similar labelled crops. The candidate then takes the label of
//! its nearest support item in an external feature space, and candidates
//! labelled negative are dropped.

mod descriptor;
mod fewshot;
mod sampler;

pub use descriptor::{chi_squared, compute_descriptor, Descriptor, COLOUR_BINS, DESCRIPTOR_LEN, ORIENTATION_BINS};
pub use fewshot::{
    build_support_set, cosine_distance, few_shot_classify, Label, PoolItem, Pools, SupportItem, SupportSet,
};
pub use sampler::{sample_boxes, BoxStats, SampleOutcome, SampledBox, ATTEMPTS_PER_BOX};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RgbImage};
use crate::segment::PixelBox;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledBox {
    /// Candidate identifier, see [`Candidate::id`].
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Detector,
    Sampler,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// `f{frame}_det{i}` for detector proposals, `f{frame}_bbs{j}` for
    /// sampled boxes. Feature tables are keyed by this id.
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoLabelParams {
    /// Boxes requested from the sampler per frame.
    pub boxes_per_frame: usize,
    pub max_iou: f64,
    pub k_per_class: usize,
}

impl Default for AutoLabelParams {
    fn default() -> Self {
        Self {
            boxes_per_frame: 10,
            max_iou: 0.3,
            k_per_class: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// The sampler placed fewer boxes than requested.
    pub saturated: bool,
}

pub fn propose_candidates(
    frame_index: usize,
    road_mask: &BinaryMask,
    proposals: &[PixelBox],
    stats: &BoxStats,
    params: &AutoLabelParams,
    seed: u64,
) -> Result<CandidateSet> {
    let mut candidates = Vec::with_capacity(proposals.len() + params.boxes_per_frame);
    for (i, b) in proposals.iter().enumerate() {
        if !b.fits(road_mask.width(), road_mask.height()) {
            return Err(Error::Data(format!(
                "frame {frame_index}: proposal {i} {b:?} leaves the frame"
            )));
        }
        candidates.push(Candidate {
            id: format!("f{frame_index}_det{i}"),
            bbox: *b,
            source: CandidateSource::Detector,
        });
    }
    let sampled = sample_boxes(
        road_mask,
        stats,
        params.boxes_per_frame,
        proposals,
        params.max_iou,
        seed,
    )?;
    candidates.extend(sampled.boxes.iter().enumerate().map(|(j, s)| Candidate {
        id: format!("f{frame_index}_bbs{j}"),
        bbox: s.bbox,
        source: CandidateSource::Sampler,
    }));
    Ok(CandidateSet {
        candidates,
        saturated: sampled.saturated,
    })
}

/// Labels the candidates of one frame and keeps the non-negative ones.
#[allow(clippy::too_many_arguments)]
pub fn auto_label(
    frame: &RgbImage,
    frame_index: usize,
    road_mask: &BinaryMask,
    proposals: &[PixelBox],
    stats: &BoxStats,
    pools: &Pools,
    features: &HashMap<String, Vec<f64>>,
    params: &AutoLabelParams,
    seed: u64,
) -> Result<Vec<LabeledBox>> {
    if !road_mask.same_dims(frame.width(), frame.height()) {
        return Err(Error::Parameter(format!(
            "frame {frame_index}: road mask does not match the image"
        )));
    }
    let set = propose_candidates(frame_index, road_mask, proposals, stats, params, seed)?;
    let mut out = Vec::new();
    for cand in set.candidates {
        let query = features
            .get(&cand.id)
            .ok_or_else(|| Error::Data(format!("no feature vector for candidate `{}`", cand.id)))?;
        let b = cand.bbox;
        let crop = frame.crop(b.x, b.y, b.w, b.h)?;
        let descriptor = compute_descriptor(&crop)?;
        let support = build_support_set(&descriptor, pools, params.k_per_class)?;
        let label =
            few_shot_classify(query, &support).map_err(|e| Error::Contract(format!("candidate `{}`: {e}", cand.id)))?;
        if label != Label::Negative {
            out.push(LabeledBox {
                id: cand.id,
                bbox: b,
                label,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::DamageClass;
    use std::collections::BTreeMap;

    fn pools() -> Pools {
        let d = compute_descriptor(&RgbImage::filled(8, 8, [90, 90, 90])).unwrap();
        let item = |id: &str, f: Vec<f64>| PoolItem {
            id: id.into(),
            descriptor: d.clone(),
            features: f,
        };
        let mut positives = BTreeMap::new();
        positives.insert(DamageClass::Pothole, vec![item("p", vec![1.0, 0.0])]);
        Pools {
            positives,
            negatives: vec![item("n", vec![0.0, 1.0])],
        }
    }

    #[test]
    fn no_candidates_no_labels() {
        let frame = RgbImage::filled(40, 30, [100; 3]);
        let road = BinaryMask::filled(40, 30, false);
        let stats = BoxStats::new(vec![(100.0, 1.0)]).unwrap();
        let out = auto_label(
            &frame,
            0,
            &road,
            &[],
            &stats,
            &pools(),
            &HashMap::new(),
            &AutoLabelParams::default(),
            1,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn negatives_are_filtered_and_missing_features_named() {
        let frame = RgbImage::filled(40, 30, [100; 3]);
        let road = BinaryMask::filled(40, 30, true);
        let stats = BoxStats::new(vec![(64.0, 1.0)]).unwrap();
        let params = AutoLabelParams {
            boxes_per_frame: 3,
            ..Default::default()
        };
        let set = propose_candidates(2, &road, &[PixelBox::new(0, 0, 8, 8)], &stats, &params, 5).unwrap();
        let all_negative: HashMap<String, Vec<f64>> =
            set.candidates.iter().map(|c| (c.id.clone(), vec![0.0, 1.0])).collect();
        let out = auto_label(
            &frame,
            2,
            &road,
            &[PixelBox::new(0, 0, 8, 8)],
            &stats,
            &pools(),
            &all_negative,
            &params,
            5,
        )
        .unwrap();
        assert!(out.is_empty());

        let mut partial = all_negative.clone();
        partial.insert("f2_det0".into(), vec![1.0, 0.1]);
        let out = auto_label(
            &frame,
            2,
            &road,
            &[PixelBox::new(0, 0, 8, 8)],
            &stats,
            &pools(),
            &partial,
            &params,
            5,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, Label::Damage(DamageClass::Pothole));

        partial.remove("f2_det0");
        let err = auto_label(
            &frame,
            2,
            &road,
            &[PixelBox::new(0, 0, 8, 8)],
            &stats,
            &pools(),
            &partial,
            &params,
            5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("f2_det0"), "{err}");
    }
}
