//! Painted crop fixtures with exact pixel ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{BinaryMask, RgbImage};
use crate::segment::{DamageClass, DamageCrop, PixelBox};

const SUB: usize = 4;

/// A crop and the pixels that truly belong to the damage.
#[derive(Debug, Clone)]
pub struct CropFixture {
    pub crop: DamageCrop,
    pub truth: BinaryMask,
}

/// Paints `base(x, y) + delta·coverage` with Gaussian noise; the truth mask
/// holds the pixels whose centre is inside.
fn paint(
    w: usize,
    h: usize,
    base: impl Fn(usize, usize) -> f64,
    delta: f64,
    inside: impl Fn(f64, f64) -> bool,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (RgbImage, BinaryMask) {
    let normal = Normal::new(0.0, noise).expect("noise sigma");
    let truth = BinaryMask::from_fn(w, h, |x, y| inside(x as f64, y as f64));
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let dx = (sx as f64 + 0.5) / SUB as f64 - 0.5;
                    let dy = (sy as f64 + 0.5) / SUB as f64 - 0.5;
                    n += inside(x as f64 + dx, y as f64 + dy) as usize;
                }
            }
            let c = n as f64 / (SUB * SUB) as f64;
            let v = base(x, y) + delta * c + normal.sample(rng);
            let g = v.round().clamp(0.0, 255.0) as u8;
            data.push([g, g, g]);
        }
    }
    (RgbImage::new(w, h, data).expect("non-empty"), truth)
}

fn whole(w: usize, h: usize) -> PixelBox {
    PixelBox::new(0, 0, w, h)
}

/// A dark filled ellipse on bright asphalt, randomised by `seed`.
pub fn ellipse_crop(seed: u64) -> CropFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(64..=110);
    let h = rng.random_range(64..=110);
    let rx = rng.random_range(0.22..0.36) * w as f64;
    let ry = rng.random_range(0.22..0.36) * h as f64;
    let cx = w as f64 / 2.0 + rng.random_range(-0.08..0.08) * w as f64;
    let cy = h as f64 / 2.0 + rng.random_range(-0.08..0.08) * h as f64;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let background = rng.random_range(140.0..190.0);
    let delta = -rng.random_range(60.0..100.0);
    let (s, c) = angle.sin_cos();
    let inside = move |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
        (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
    };
    let (img, truth) = paint(w, h, |_, _| background, delta, inside, 3.0, &mut rng);
    CropFixture {
        crop: DamageCrop::new(img, DamageClass::Pothole, None, whole(w, h)).expect("valid crop"),
        truth,
    }
}

fn line_distance(x: f64, y: f64, p: (f64, f64), q: (f64, f64)) -> f64 {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let len2 = dx * dx + dy * dy;
    let t = (((x - p.0) * dx + (y - p.1) * dy) / len2).clamp(0.0, 1.0);
    ((p.0 + t * dx - x).powi(2) + (p.1 + t * dy - y).powi(2)).sqrt()
}

/// A 2-pixel-wide dark straight crack at a random angle.
pub fn line_crop(seed: u64) -> CropFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(80..=130);
    let h = rng.random_range(80..=130);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let reach = 0.4 * w.min(h) as f64;
    let p = (cx - reach * angle.cos(), cy - reach * angle.sin());
    let q = (cx + reach * angle.cos(), cy + reach * angle.sin());
    let background = rng.random_range(140.0..190.0);
    let delta = -rng.random_range(60.0..90.0);
    let inside = move |x: f64, y: f64| line_distance(x, y, p, q) <= 1.0;
    let (img, truth) = paint(w, h, |_, _| background, delta, inside, 3.0, &mut rng);
    let class = if angle.sin().abs() > angle.cos().abs() {
        DamageClass::LongitudinalCrack
    } else {
        DamageClass::TransverseCrack
    };
    CropFixture {
        crop: DamageCrop::new(img, class, None, whole(w, h)).expect("valid crop"),
        truth,
    }
}

/// A dark 2-pixel crack crossing a bright vertical road marking. The
/// marking mask goes with the crop.
pub fn crossing_crop(seed: u64) -> CropFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (120usize, 90usize);
    let (m0, m1) = (45usize, 75usize);
    let y0 = rng.random_range(30.0..40.0);
    let y1 = rng.random_range(50.0..60.0);
    let (p, q) = ((8.0, y0), (w as f64 - 9.0, y1));
    let base = move |x: usize, _| if (m0..m1).contains(&x) { 225.0 } else { 140.0 };
    let inside = move |x: f64, y: f64| line_distance(x, y, p, q) <= 1.0;
    let (img, truth) = paint(w, h, base, -80.0, inside, 3.0, &mut rng);
    let marking = BinaryMask::from_fn(w, h, |x, _| (m0..m1).contains(&x));
    CropFixture {
        crop: DamageCrop::new(img, DamageClass::TransverseCrack, Some(marking), whole(w, h)).expect("valid crop"),
        truth,
    }
}
