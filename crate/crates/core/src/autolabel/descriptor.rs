use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{sobel, to_grayscale, RgbImage};

/// Bins per colour channel (channel value / 32).
pub const COLOUR_BINS: usize = 8;
/// Gradient-orientation bins over `[0, π)`.
pub const ORIENTATION_BINS: usize = 9;
pub const DESCRIPTOR_LEN: usize = 3 * COLOUR_BINS + ORIENTATION_BINS;

/// Colour and gradient-orientation histogram of a crop.
///
/// Layout: red, green and blue marginal histograms (8 bins each) followed by
/// the 9 orientation bins. The colour block and the orientation block are
/// each normalised to unit mass and the concatenation is then L1-normalised,
/// so the two signals weigh equally. A crop without gradient keeps zero
/// orientation bins and puts all mass on colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != DESCRIPTOR_LEN || values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Contract(format!(
                "descriptor needs {DESCRIPTOR_LEN} non-negative entries"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn colour(&self) -> &[f64] {
        &self.0[..3 * COLOUR_BINS]
    }

    pub fn orientation(&self) -> &[f64] {
        &self.0[3 * COLOUR_BINS..]
    }
}

pub fn compute_descriptor(crop: &RgbImage) -> Result<Descriptor> {
    if crop.width() < 3 || crop.height() < 3 {
        return Err(Error::Parameter(format!(
            "descriptor needs a 3x3 crop, got {}x{}",
            crop.width(),
            crop.height()
        )));
    }
    let mut colour = [0.0f64; 3 * COLOUR_BINS];
    for px in crop.data() {
        for (ch, &v) in px.iter().enumerate() {
            colour[ch * COLOUR_BINS + usize::from(v) / 32] += 1.0;
        }
    }
    let grad = sobel(&to_grayscale(crop))?;
    let mut orient = [0.0f64; ORIENTATION_BINS];
    let bin_width = std::f64::consts::PI / ORIENTATION_BINS as f64;
    for y in 0..grad.height() {
        for x in 0..grad.width() {
            let m = grad.magnitude(x, y);
            if m > 0.0 {
                let bin = ((grad.orientation(x, y) / bin_width) as usize).min(ORIENTATION_BINS - 1);
                orient[bin] += m;
            }
        }
    }
    let colour_mass: f64 = colour.iter().sum();
    let orient_mass: f64 = orient.iter().sum();
    let blocks = if orient_mass > 0.0 { 2.0 } else { 1.0 };
    let mut values = Vec::with_capacity(DESCRIPTOR_LEN);
    values.extend(colour.iter().map(|c| c / colour_mass / blocks));
    values.extend(orient.iter().map(|o| {
        if orient_mass > 0.0 {
            o / orient_mass / blocks
        } else {
            0.0
        }
    }));
    Ok(Descriptor(values))
}

/// Chi-squared histogram distance `½ Σ (aᵢ − bᵢ)² / (aᵢ + bᵢ)`, skipping bins
/// empty in both.
pub fn chi_squared(a: &Descriptor, b: &Descriptor) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .filter(|(x, y)| **x + **y > 0.0)
        .map(|(x, y)| (x - y) * (x - y) / (x + y))
        .sum::<f64>()
        * 0.5
}
