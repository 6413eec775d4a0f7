use super::{GradientField, GrayImage, RgbImage};
use crate::error::{Error, Result};

/// Broadcast luminance: `round(0.299 r + 0.587 g + 0.114 b)`.
pub fn to_grayscale(image: &RgbImage) -> GrayImage {
    let data = image
        .data()
        .iter()
        .map(|&[r, g, b]| {
            let l = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            l.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(image.width(), image.height(), data).expect("dimensions preserved")
}

/// Edge-preserving smoothing with a `(2·radius+1)²` window.
///
/// Each output pixel is the normalised average of its window weighted by
/// `exp(-d²/2σs²) · exp(-Δ²/2σr²)`, where `d` is the spatial offset and `Δ`
/// the intensity difference to the centre pixel.
pub fn bilateral_filter(image: &GrayImage, sigma_spatial: f64, sigma_range: f64, radius: usize) -> Result<GrayImage> {
    if !(sigma_spatial > 0.0) || !(sigma_range > 0.0) {
        return Err(Error::Parameter(format!(
            "bilateral sigmas must be positive (spatial {sigma_spatial}, range {sigma_range})"
        )));
    }
    if radius == 0 {
        return Err(Error::Parameter("bilateral radius must be >= 1".into()));
    }
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            spatial.push((-d2 / (2.0 * sigma_spatial * sigma_spatial)).exp());
        }
    }
    let range: Vec<f64> = (0..256)
        .map(|delta| {
            let d = delta as f64;
            (-d * d / (2.0 * sigma_range * sigma_range)).exp()
        })
        .collect();

    let (w, h) = (image.width(), image.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let centre = image.get(x as usize, y as usize);
            let mut acc = 0.0;
            let mut norm = 0.0;
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = image.get_clamped(x + dx, y + dy);
                    let wgt = spatial[k] * range[centre.abs_diff(v) as usize];
                    acc += wgt * v as f64;
                    norm += wgt;
                    k += 1;
                }
            }
            out.push((acc / norm).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(w, h, out)
}

/// 3×3 Sobel derivatives with edge replication.
///
/// `Gx` responds to intensity increasing to the right, `Gy` to intensity
/// increasing downwards.
pub fn sobel(image: &GrayImage) -> Result<GradientField> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::Parameter(format!(
            "sobel needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| image.get_clamped(x + dx, y + dy) as i32;
            let sx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
            gx.push(sx);
            gy.push(sy);
        }
    }
    Ok(GradientField::from_components(w, h, gx, gy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grayscale_examples() {
        let white = RgbImage::filled(4, 3, [255, 255, 255]);
        assert!(to_grayscale(&white).data().iter().all(|&v| v == 255));
        let red = RgbImage::filled(4, 3, [255, 0, 0]);
        assert!(to_grayscale(&red).data().iter().all(|&v| v == 76));
        for g in [0u8, 1, 77, 128, 254, 255] {
            let img = RgbImage::filled(2, 2, [g, g, g]);
            assert!(to_grayscale(&img).data().iter().all(|&v| v == g));
        }
    }

    #[test]
    fn bilateral_rejects_bad_params() {
        let img = GrayImage::filled(5, 5, 10);
        assert!(matches!(bilateral_filter(&img, 0.0, 10.0, 2), Err(Error::Parameter(_))));
        assert!(bilateral_filter(&img, 1.0, -1.0, 2).is_err());
        assert!(bilateral_filter(&img, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn bilateral_constant_is_identity() {
        let img = GrayImage::filled(9, 7, 131);
        assert_eq!(bilateral_filter(&img, 2.0, 20.0, 3).unwrap(), img);
    }

    #[test]
    fn bilateral_keeps_step_location() {
        let img = GrayImage::from_fn(20, 10, |x, _| if x < 10 { 0 } else { 255 });
        let out = bilateral_filter(&img, 3.0, 30.0, 3).unwrap();
        for y in 0..10 {
            for x in 0..20 {
                let v = out.get(x, y);
                if x < 10 {
                    assert!(v <= 127, "({x},{y}) = {v}");
                } else {
                    assert!(v > 127, "({x},{y}) = {v}");
                }
            }
        }
    }

    /// Straightforward per-pixel double loop, written independently of the
    /// table-driven implementation.
    fn reference_bilateral(img: &GrayImage, ss: f64, sr: f64, radius: i64) -> GrayImage {
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            let c = img.get(x, y) as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let xx = (x as i64 + dx).clamp(0, img.width() as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, img.height() as i64 - 1) as usize;
                    let v = img.get(xx, yy) as f64;
                    let ws = (-((dx * dx + dy * dy) as f64) / (2.0 * ss * ss)).exp();
                    let wr = (-((v - c) * (v - c)) / (2.0 * sr * sr)).exp();
                    num += ws * wr * v;
                    den += ws * wr;
                }
            }
            (num / den).round() as u8
        })
    }

    fn variance(img: &GrayImage) -> f64 {
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        img.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn bilateral_reduces_noise_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = GrayImage::from_fn(32, 32, |_, _| (128 + rng.random_range(-20i32..=20)) as u8);
        let out = bilateral_filter(&img, 2.0, 30.0, 2).unwrap();
        let reference = reference_bilateral(&img, 2.0, 30.0, 2);
        let max_diff = out
            .data()
            .iter()
            .zip(reference.data())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap();
        assert!(max_diff <= 1, "implementation deviates from reference by {max_diff}");
        assert!(variance(&out) < variance(&img));
        assert!(variance(&reference) < variance(&img));
    }

    #[test]
    fn sobel_too_small() {
        let img = GrayImage::filled(2, 5, 0);
        assert!(matches!(sobel(&img), Err(Error::Parameter(_))));
    }

    #[test]
    fn sobel_constant_and_step() {
        let flat = GrayImage::filled(6, 6, 99);
        assert!(sobel(&flat).unwrap().magnitudes().iter().all(|&m| m == 0.0));

        let step = GrayImage::from_fn(10, 6, |x, _| if x < 5 { 0 } else { 255 });
        let g = sobel(&step).unwrap();
        for y in 1..5 {
            assert_eq!(g.components(4, y).0, 1020);
            assert_eq!(g.components(5, y).0, 1020);
            assert_eq!(g.magnitude(4, y), 1020.0);
            assert_eq!(g.magnitude(2, y), 0.0);
        }
    }

    #[test]
    fn sobel_orientation_range() {
        let img = GrayImage::from_fn(8, 8, |x, y| ((x * 31 + y * 17) % 256) as u8);
        let g = sobel(&img).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let t = g.orientation(x, y);
                assert!((0.0..std::f64::consts::PI).contains(&t));
            }
        }
    }

    fn arb_gray() -> impl Strategy<Value = GrayImage> {
        (3usize..12, 3usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bilateral_output_within_input_range(img in arb_gray(), ss in 0.5f64..4.0, sr in 1.0f64..80.0) {
            let out = bilateral_filter(&img, ss, sr, 2).unwrap();
            let lo = *img.data().iter().min().unwrap();
            let hi = *img.data().iter().max().unwrap();
            prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn sobel_invariant_under_inversion(img in arb_gray()) {
            let a = sobel(&img).unwrap();
            let b = sobel(&img.inverted()).unwrap();
            prop_assert_eq!(a.magnitudes(), b.magnitudes());
        }

        #[test]
        fn sobel_commutes_with_transpose(img in arb_gray()) {
            let a = sobel(&img).unwrap();
            let b = sobel(&img.transposed()).unwrap();
            for y in 0..img.height() {
                for x in 0..img.width() {
                    prop_assert_eq!(a.magnitude(x, y), b.magnitude(y, x));
                }
            }
        }
    }
}
