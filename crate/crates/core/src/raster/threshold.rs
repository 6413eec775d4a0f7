use super::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

/// Otsu's threshold over the pixels selected by `roi`.
///
/// Class 0 is `value <= t`. Returns the smallest `t` maximising the
/// between-class variance.
pub fn otsu_threshold(image: &GrayImage, roi: &BinaryMask) -> Result<u8> {
    if !roi.same_dims(image.width(), image.height()) {
        return Err(Error::Parameter("roi does not match image dimensions".into()));
    }
    let mut hist = [0u64; 256];
    for (v, &sel) in image.data().iter().zip(roi.data()) {
        if sel {
            hist[*v as usize] += 1;
        }
    }
    otsu_from_histogram(&hist)
}

/// Otsu's threshold on a 256-bin histogram.
///
/// Between-class variance is evaluated as `(n1·s0 − n0·s1)² / (n0·n1)`,
/// which is `N²·w0·w1·(μ0−μ1)²`; the constant `N²` does not move the argmax.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8> {
    let total: u64 = hist.iter().sum();
    if total < 2 {
        return Err(Error::DegenerateInput(format!(
            "otsu needs at least 2 pixels, got {total}"
        )));
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateInput("single-valued histogram".into()));
    }
    let total_sum: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();

    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best_t = 0u8;
    let mut best = -1.0f64;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u128 * count as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        let diff = n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128;
        let diff = diff as f64;
        let score = diff * diff / (n0 as f64 * n1 as f64);
        if score > best {
            best = score;
            best_t = t as u8;
        }
    }
    Ok(best_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force sweep from the textbook definition: split the actual pixel
    /// list at each level and evaluate `w0·w1·(μ0−μ1)²`.
    fn sweep(values: &[u8]) -> Option<u8> {
        let n = values.len() as f64;
        let mut best: Option<(f64, u8)> = None;
        for t in 0..=255u8 {
            let c0: Vec<f64> = values.iter().filter(|&&v| v <= t).map(|&v| v as f64).collect();
            let c1: Vec<f64> = values.iter().filter(|&&v| v > t).map(|&v| v as f64).collect();
            if c0.is_empty() || c1.is_empty() {
                continue;
            }
            let m0 = c0.iter().sum::<f64>() / c0.len() as f64;
            let m1 = c1.iter().sum::<f64>() / c1.len() as f64;
            let var = (c0.len() as f64 / n) * (c1.len() as f64 / n) * (m0 - m1).powi(2);
            if best.is_none_or(|(b, _)| var > b) {
                best = Some((var, t));
            }
        }
        best.map(|(_, t)| t)
    }

    fn image_of(values: Vec<u8>) -> (GrayImage, BinaryMask) {
        let n = values.len();
        (GrayImage::new(n, 1, values).unwrap(), BinaryMask::filled(n, 1, true))
    }

    #[test]
    fn two_level_picks_lower_level() {
        let mut v = vec![50u8; 100];
        v.extend(vec![200u8; 100]);
        assert_eq!(sweep(&v), Some(50));
        let (img, roi) = image_of(v);
        assert_eq!(otsu_threshold(&img, &roi).unwrap(), 50);
    }

    #[test]
    fn three_level_matches_sweep() {
        let mut v = vec![10u8; 40];
        v.extend(vec![120u8; 20]);
        v.extend(vec![240u8; 40]);
        let expected = sweep(&v).unwrap();
        let (img, roi) = image_of(v);
        assert_eq!(otsu_threshold(&img, &roi).unwrap(), expected);
    }

    #[test]
    fn degenerate_inputs() {
        let (img, roi) = image_of(vec![7u8; 30]);
        assert!(matches!(otsu_threshold(&img, &roi), Err(Error::DegenerateInput(_))));
        let empty = BinaryMask::filled(30, 1, false);
        assert!(otsu_threshold(&img, &empty).is_err());
    }

    #[test]
    fn roi_restricts_pixels() {
        let img = GrayImage::from_fn(4, 1, |x, _| [0, 100, 200, 255][x]);
        let roi = BinaryMask::from_fn(4, 1, |x, _| x >= 2);
        assert_eq!(otsu_threshold(&img, &roi).unwrap(), 200);
    }

    proptest! {
        #[test]
        fn equals_bruteforce_sweep(values in proptest::collection::vec(any::<u8>(), 2..200)) {
            let expected = sweep(&values);
            let (img, roi) = image_of(values);
            match expected {
                Some(t) => prop_assert_eq!(otsu_threshold(&img, &roi).unwrap(), t),
                None => prop_assert!(otsu_threshold(&img, &roi).is_err()),
            }
        }
    }
}
