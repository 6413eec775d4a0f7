use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::segment::PixelBox;

/// Attempts per requested box before the sampler gives up.
pub const ATTEMPTS_PER_BOX: usize = 100;
/// Sampled boxes narrower or shorter than this are rejected, since no
/// descriptor can be computed on them.
const MIN_SIDE: usize = 3;

/// Empirical `(area px², aspect w/h)` pairs harvested from labelled boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pairs: Vec<(f64, f64)>,
}

impl BoxStats {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Contract("box statistics pool is empty".into()));
        }
        if let Some(bad) = pairs
            .iter()
            .find(|(a, r)| !(*a > 0.0 && *r > 0.0 && a.is_finite() && r.is_finite()))
        {
            return Err(Error::Contract(format!("invalid box statistic {bad:?}")));
        }
        Ok(Self { pairs })
    }

    pub fn from_boxes(boxes: &[PixelBox]) -> Result<Self> {
        Self::new(
            boxes
                .iter()
                .map(|b| (b.area() as f64, b.w as f64 / b.h as f64))
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledBox {
    pub bbox: PixelBox,
    /// The `(area, aspect)` pool entry the box was built from.
    pub drawn: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleOutcome {
    pub boxes: Vec<SampledBox>,
    /// Fewer than the requested number of boxes could be placed.
    pub saturated: bool,
}

/// "Without-replacement" bounding-box sampler.
///
/// Every attempt draws a centre uniformly from the road pixels and a size
/// uniformly from the pool, then clips the box to the frame. The attempt is
/// kept only when the clipped box's centre is still on the road and its IoU
/// with every existing and every already accepted box is at most
/// `max_iou`. At most `100·n` attempts are made.
pub fn sample_boxes(
    road_mask: &BinaryMask,
    stats: &BoxStats,
    n: usize,
    existing: &[PixelBox],
    max_iou: f64,
    seed: u64,
) -> Result<SampleOutcome> {
    if !(0.0..1.0).contains(&max_iou) {
        return Err(Error::Parameter(format!("max_iou must be in [0, 1), got {max_iou}")));
    }
    if n == 0 {
        return Ok(SampleOutcome::default());
    }
    let road: Vec<(usize, usize)> = road_mask.iter_true().collect();
    if road.is_empty() {
        return Ok(SampleOutcome {
            boxes: Vec::new(),
            saturated: true,
        });
    }
    let (fw, fh) = (road_mask.width() as i64, road_mask.height() as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<SampledBox> = Vec::with_capacity(n);
    for _ in 0..ATTEMPTS_PER_BOX * n {
        if accepted.len() == n {
            break;
        }
        let (cx, cy) = road[rng.random_range(0..road.len())];
        let drawn = stats.pairs[rng.random_range(0..stats.pairs.len())];
        let (area, aspect) = drawn;
        let w = ((area * aspect).sqrt().round() as i64).max(1);
        let h = ((area / aspect).sqrt().round() as i64).max(1);
        let x0 = (cx as i64 - w / 2).clamp(0, fw);
        let y0 = (cy as i64 - h / 2).clamp(0, fh);
        let x1 = (cx as i64 - w / 2 + w).clamp(0, fw);
        let y1 = (cy as i64 - h / 2 + h).clamp(0, fh);
        let bbox = PixelBox::new(x0 as usize, y0 as usize, (x1 - x0) as usize, (y1 - y0) as usize);
        if bbox.w < MIN_SIDE || bbox.h < MIN_SIDE {
            continue;
        }
        let (bx, by) = bbox.center();
        if !road_mask.get(bx, by) {
            continue;
        }
        let clear =
            existing.iter().all(|e| bbox.iou(e) <= max_iou) && accepted.iter().all(|a| bbox.iou(&a.bbox) <= max_iou);
        if clear {
            accepted.push(SampledBox { bbox, drawn });
        }
    }
    Ok(SampleOutcome {
        saturated: accepted.len() < n,
        boxes: accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats() -> BoxStats {
        BoxStats::new(vec![(400.0, 1.0), (900.0, 2.0), (1600.0, 0.5), (2500.0, 1.5)]).unwrap()
    }

    #[test]
    fn zero_requested() {
        let mask = BinaryMask::filled(100, 100, true);
        let out = sample_boxes(&mask, &stats(), 0, &[], 0.3, 1).unwrap();
        assert!(out.boxes.is_empty() && !out.saturated);
    }

    #[test]
    fn empty_road_saturates() {
        let mask = BinaryMask::filled(100, 100, false);
        let out = sample_boxes(&mask, &stats(), 5, &[], 0.3, 1).unwrap();
        assert!(out.boxes.is_empty() && out.saturated);
    }

    #[test]
    fn pool_validation() {
        assert!(BoxStats::new(vec![]).is_err());
        assert!(BoxStats::new(vec![(0.0, 1.0)]).is_err());
        let s = BoxStats::from_boxes(&[PixelBox::new(0, 0, 20, 10)]).unwrap();
        assert_eq!(s.pairs(), &[(200.0, 2.0)]);
        let mask = BinaryMask::filled(10, 10, true);
        assert!(sample_boxes(&mask, &stats(), 1, &[], 1.0, 0).is_err());
    }

    pub(crate) fn check_properties(
        mask: &BinaryMask,
        stats: &BoxStats,
        existing: &[PixelBox],
        out: &SampleOutcome,
        max_iou: f64,
    ) -> std::result::Result<(), String> {
        for (i, s) in out.boxes.iter().enumerate() {
            let (cx, cy) = s.bbox.center();
            if !mask.get(cx, cy) {
                return Err(format!("box {i} centre off the road"));
            }
            if !stats.pairs().contains(&s.drawn) {
                return Err(format!("box {i} drawn from outside the pool"));
            }
            if !s.bbox.fits(mask.width(), mask.height()) {
                return Err(format!("box {i} leaves the frame"));
            }
            for e in existing {
                if s.bbox.iou(e) > max_iou {
                    return Err(format!("box {i} overlaps an existing box"));
                }
            }
            for t in &out.boxes[..i] {
                if s.bbox.iou(&t.bbox) > max_iou {
                    return Err(format!("box {i} overlaps an earlier box"));
                }
            }
        }
        Ok(())
    }

    #[test]
    fn half_frame_fifty_boxes() {
        let mask = BinaryMask::from_fn(640, 360, |_, y| y >= 180);
        let existing = [PixelBox::new(300, 200, 60, 40)];
        let out = sample_boxes(&mask, &stats(), 50, &existing, 0.3, 9).unwrap();
        assert!(!out.boxes.is_empty());
        check_properties(&mask, &stats(), &existing, &out, 0.3).unwrap();
    }

    #[test]
    fn seeded_determinism() {
        let mask = BinaryMask::from_fn(200, 100, |x, _| x > 50);
        let a = sample_boxes(&mask, &stats(), 10, &[], 0.3, 4).unwrap();
        let b = sample_boxes(&mask, &stats(), 10, &[], 0.3, 4).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_masks_hold_box_properties(
            bits in proptest::collection::vec(any::<bool>(), 16),
            seed in any::<u64>(),
            n in 0usize..20,
        ) {
            // A coarse 4×4 pattern blown up to 160×120.
            let mask = BinaryMask::from_fn(160, 120, |x, y| bits[(y / 30) * 4 + x / 40]);
            let out = sample_boxes(&mask, &stats(), n, &[], 0.3, seed).unwrap();
            prop_assert!(out.boxes.len() <= n);
            if let Err(e) = check_properties(&mask, &stats(), &[], &out, 0.3) {
                prop_assert!(false, "{}", e);
            }
        }
    }
}
