//! Damage segmentation inside a detection crop.
//!
//! The crop is converted to luminance, bilateral-smoothed and split into a
//! road-marking region and the surrounding road. Each region gets
//! zero-order edges (Otsu threshold, dark class) and first-order edges
//! (Sobel magnitude percentile). The two orders are blended with per-class
//! weights and the per-region results are stitched back together.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    bilateral_filter, morph, otsu_threshold, remove_small_components, sobel, to_grayscale, BinaryMask, GrayImage,
    MorphOp, RgbImage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageClass {
    LongitudinalCrack,
    TransverseCrack,
    AlligatorCrack,
    Pothole,
}

impl DamageClass {
    pub const ALL: [DamageClass; 4] = [
        DamageClass::LongitudinalCrack,
        DamageClass::TransverseCrack,
        DamageClass::AlligatorCrack,
        DamageClass::Pothole,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DamageClass::LongitudinalCrack => "longitudinal_crack",
            DamageClass::TransverseCrack => "transverse_crack",
            DamageClass::AlligatorCrack => "alligator_crack",
            DamageClass::Pothole => "pothole",
        }
    }

    pub fn is_linear_crack(&self) -> bool {
        matches!(self, DamageClass::LongitudinalCrack | DamageClass::TransverseCrack)
    }
}

impl fmt::Display for DamageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DamageClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DamageClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown damage class `{s}`")))
    }
}

/// Pixel bounding box `(x, y, w, h)` in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// Centre pixel, rounding towards the top-left.
    pub fn center(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn iou(&self, other: &PixelBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        let inter = if x1 > x0 && y1 > y0 { (x1 - x0) * (y1 - y0) } else { 0 };
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// A detection crop ready for segmentation.
#[derive(Debug, Clone)]
pub struct DamageCrop {
    pub pixels: RgbImage,
    pub class: DamageClass,
    /// `true` on road-marking pixels.
    pub marking_mask: Option<BinaryMask>,
    pub source_box: PixelBox,
}

impl DamageCrop {
    pub fn new(
        pixels: RgbImage,
        class: DamageClass,
        marking_mask: Option<BinaryMask>,
        source_box: PixelBox,
    ) -> Result<Self> {
        if let Some(m) = &marking_mask {
            if !m.same_dims(pixels.width(), pixels.height()) {
                return Err(Error::Parameter("marking mask does not match crop dimensions".into()));
            }
        }
        Ok(Self {
            pixels,
            class,
            marking_mask,
            source_box,
        })
    }
}

/// Edge-extraction parameters for one region (road or marking).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionParams {
    /// Percentile of in-region Sobel magnitudes above which a pixel is a
    /// first-order edge.
    pub sobel_percentile: f64,
    pub zero_open_radius: usize,
    pub zero_close_radius: usize,
    pub first_close_radius: usize,
    pub first_open_radius: usize,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            sobel_percentile: 90.0,
            zero_open_radius: 1,
            zero_close_radius: 2,
            first_close_radius: 2,
            first_open_radius: 1,
        }
    }
}

impl RegionParams {
    /// Road-marking defaults: same morphology, half the kept Sobel tail.
    pub fn marking_default() -> Self {
        let road = Self::default();
        Self {
            sobel_percentile: 100.0 - (100.0 - road.sobel_percentile) / 2.0,
            ..road
        }
    }
}

/// Zero-order / first-order blend weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderWeights {
    pub zero: f64,
    pub first: f64,
}

impl OrderWeights {
    pub const fn new(zero: f64, first: f64) -> Self {
        Self { zero, first }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassWeights {
    pub longitudinal_crack: OrderWeights,
    pub transverse_crack: OrderWeights,
    pub alligator_crack: OrderWeights,
    pub pothole: OrderWeights,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            longitudinal_crack: OrderWeights::new(0.0, 1.0),
            transverse_crack: OrderWeights::new(0.0, 1.0),
            alligator_crack: OrderWeights::new(0.7, 0.3),
            pothole: OrderWeights::new(1.0, 0.0),
        }
    }
}

impl ClassWeights {
    pub fn get(&self, class: DamageClass) -> OrderWeights {
        match class {
            DamageClass::LongitudinalCrack => self.longitudinal_crack,
            DamageClass::TransverseCrack => self.transverse_crack,
            DamageClass::AlligatorCrack => self.alligator_crack,
            DamageClass::Pothole => self.pothole,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegParams {
    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
    pub bilateral_radius: usize,
    pub road: RegionParams,
    pub marking: RegionParams,
    pub weights: ClassWeights,
    pub binarize_level: f64,
    pub min_component_pixels: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            bilateral_sigma_spatial: 2.0,
            bilateral_sigma_range: 25.0,
            bilateral_radius: 2,
            road: RegionParams::default(),
            marking: RegionParams::marking_default(),
            weights: ClassWeights::default(),
            binarize_level: 0.5,
            min_component_pixels: 16,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        for class in DamageClass::ALL {
            let w = self.weights.get(class);
            if w.zero < 0.0 || w.first < 0.0 || (w.zero + w.first - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!(
                    "order weights for {class} must be non-negative and sum to 1"
                )));
            }
        }
        for (name, r) in [("road", &self.road), ("marking", &self.marking)] {
            if !(r.sobel_percentile > 0.0 && r.sobel_percentile < 100.0) {
                return Err(Error::Parameter(format!(
                    "{name} sobel percentile must lie in (0, 100)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamageMask {
    pub mask: BinaryMask,
    pub class: DamageClass,
}

/// Returns `(road_region, marking_region)`; the two partition the crop.
pub fn split_regions(crop: &DamageCrop) -> (BinaryMask, BinaryMask) {
    let (w, h) = (crop.pixels.width(), crop.pixels.height());
    let marking = crop
        .marking_mask
        .clone()
        .unwrap_or_else(|| BinaryMask::filled(w, h, false));
    (marking.not(), marking)
}

/// Value at percentile `p` (nearest rank on the sorted values).
fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// The crop as seen by one region: pixels outside `region` take the
/// region's median intensity, so the region boundary itself produces no
/// gradient. Without this, marking borders dominate the Sobel response of
/// both regions.
pub fn region_pixels(gray: &GrayImage, region: &BinaryMask) -> GrayImage {
    let mut hist = [0usize; 256];
    for (x, y) in region.iter_true() {
        hist[usize::from(gray.get(x, y))] += 1;
    }
    let half = region.count().div_ceil(2);
    let mut acc = 0;
    let median = hist
        .iter()
        .position(|&c| {
            acc += c;
            acc >= half.max(1)
        })
        .unwrap_or(0) as u8;
    GrayImage::from_fn(gray.width(), gray.height(), |x, y| {
        if region.get(x, y) {
            gray.get(x, y)
        } else {
            median
        }
    })
}

/// Zero-order and first-order edge masks restricted to `region`.
pub fn extract_edges(
    pixels: &GrayImage,
    region: &BinaryMask,
    params: &RegionParams,
) -> Result<(BinaryMask, BinaryMask)> {
    let (w, h) = (pixels.width(), pixels.height());
    if !region.same_dims(w, h) {
        return Err(Error::Parameter("region does not match image".into()));
    }
    if region.is_empty() {
        return Err(Error::Parameter("empty region".into()));
    }

    let zero = match otsu_threshold(pixels, region) {
        Ok(t) => {
            let raw = BinaryMask::from_fn(w, h, |x, y| region.get(x, y) && pixels.get(x, y) <= t);
            let opened = morph(&raw, MorphOp::Open, params.zero_open_radius);
            morph(&opened, MorphOp::Close, params.zero_close_radius).and(region)
        }
        Err(Error::DegenerateInput(_)) => BinaryMask::filled(w, h, false),
        Err(e) => return Err(e),
    };

    let grad = sobel(pixels)?;
    let mut inside: Vec<f64> = region.iter_true().map(|(x, y)| grad.magnitude(x, y)).collect();
    let cut = percentile(&mut inside, params.sobel_percentile);
    let raw = BinaryMask::from_fn(w, h, |x, y| region.get(x, y) && grad.magnitude(x, y) > cut);
    let closed = morph(&raw, MorphOp::Close, params.first_close_radius);
    let first = morph(&closed, MorphOp::Open, params.first_open_radius).and(region);

    Ok((zero, first))
}

/// Per-pixel `w0·zero + w1·first >= level`.
pub fn aggregate_orders(
    zero_order: &BinaryMask,
    first_order: &BinaryMask,
    class: DamageClass,
    params: &SegParams,
) -> BinaryMask {
    let w = params.weights.get(class);
    let level = params.binarize_level;
    BinaryMask::from_fn(zero_order.width(), zero_order.height(), |x, y| {
        let z = if zero_order.get(x, y) { 1.0 } else { 0.0 };
        let f = if first_order.get(x, y) { 1.0 } else { 0.0 };
        w.zero * z + w.first * f >= level
    })
}

/// `(road_part ∧ ¬marking) ∨ (marking_part ∧ marking)`.
pub fn collate_masks(road_part: &BinaryMask, marking_part: &BinaryMask, marking_region: &BinaryMask) -> BinaryMask {
    road_part.and_not(marking_region).or(&marking_part.and(marking_region))
}

pub const MIN_CROP_SIDE: usize = 8;

/// Full crop segmentation: luminance, bilateral smoothing, region split,
/// per-region edges on [`region_pixels`], per-class blending, collation and
/// removal of small components.
pub fn segment_damage(crop: &DamageCrop, params: &SegParams) -> Result<DamageMask> {
    params.validate()?;
    let (w, h) = (crop.pixels.width(), crop.pixels.height());
    if w < MIN_CROP_SIDE || h < MIN_CROP_SIDE {
        return Err(Error::Parameter(format!(
            "crop {w}x{h} is smaller than {MIN_CROP_SIDE}x{MIN_CROP_SIDE}"
        )));
    }
    let gray = to_grayscale(&crop.pixels);
    let smooth = bilateral_filter(
        &gray,
        params.bilateral_sigma_spatial,
        params.bilateral_sigma_range,
        params.bilateral_radius,
    )?;
    let (road_region, marking_region) = split_regions(crop);

    let segment_region = |region: &BinaryMask, region_params: &RegionParams| -> Result<BinaryMask> {
        if region.is_empty() {
            return Ok(BinaryMask::filled(w, h, false));
        }
        let (zero, first) = extract_edges(&region_pixels(&smooth, region), region, region_params)?;
        Ok(aggregate_orders(&zero, &first, crop.class, params))
    };
    let road_part = segment_region(&road_region, &params.road)?;
    let marking_part = segment_region(&marking_region, &params.marking)?;
    let collated = collate_masks(&road_part, &marking_part, &marking_region);
    Ok(DamageMask {
        mask: remove_small_components(&collated, params.min_component_pixels),
        class: crop.class,
    })
}
