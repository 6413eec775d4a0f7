use std::collections::VecDeque;

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// Binary morphology with a `(2·radius+1)²` square structuring element.
///
/// The window is clipped at the raster border (equivalent to edge
/// replication for a square element). A radius of 0 is the identity.
pub fn morph(mask: &BinaryMask, op: MorphOp, radius: usize) -> BinaryMask {
    match op {
        MorphOp::Erode => erode(mask, radius),
        MorphOp::Dilate => dilate(mask, radius),
        MorphOp::Open => dilate(&erode(mask, radius), radius),
        MorphOp::Close => erode(&dilate(mask, radius), radius),
    }
}

fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    separable(mask, radius, true)
}

fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    separable(mask, radius, false)
}

// A square element factors into a horizontal and a vertical segment.
fn separable(mask: &BinaryMask, radius: usize, all: bool) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let reduce = |mut vals: std::ops::RangeInclusive<usize>, at: &dyn Fn(usize) -> bool| {
        if all {
            vals.all(at)
        } else {
            vals.any(at)
        }
    };
    let rows = BinaryMask::from_fn(w, h, |x, y| {
        let lo = x.saturating_sub(radius);
        let hi = (x + radius).min(w - 1);
        reduce(lo..=hi, &|xx| mask.get(xx, y))
    });
    BinaryMask::from_fn(w, h, |x, y| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        reduce(lo..=hi, &|yy| rows.get(x, yy))
    })
}

/// An 8-connected set of true pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
    /// Inclusive bounds `(min_x, min_y, max_x, max_y)`.
    pub bbox: (usize, usize, usize, usize),
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// 8-connected components in raster order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || !mask.data()[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if mask.get_or_false(nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        out.push(Component { pixels, bbox });
    }
    out
}

/// Drops 8-connected components with fewer than `min_pixels` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_pixels: usize) -> BinaryMask {
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false);
    for c in connected_components(mask) {
        if c.len() >= min_pixels {
            for &(x, y) in &c.pixels {
                out.set(x, y, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(n: usize, x0: usize, y0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(n, n, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
    }

    #[test]
    fn open_removes_speckle() {
        let mut m = BinaryMask::filled(9, 9, false);
        m.set(4, 4, true);
        assert!(morph(&m, MorphOp::Open, 1).is_empty());
    }

    #[test]
    fn open_keeps_large_square() {
        let m = square(20, 5, 5, 10);
        assert_eq!(morph(&m, MorphOp::Open, 1), m);
        let at_border = square(20, 0, 0, 10);
        assert_eq!(morph(&at_border, MorphOp::Open, 1), at_border);
    }

    #[test]
    fn close_fills_pinhole() {
        let solid = square(20, 5, 5, 10);
        let mut holed = solid.clone();
        holed.set(9, 9, false);
        assert_eq!(morph(&holed, MorphOp::Close, 1), solid);
    }

    #[test]
    fn erode_dilate_radius() {
        let mut m = BinaryMask::filled(11, 11, false);
        m.set(5, 5, true);
        let d = morph(&m, MorphOp::Dilate, 2);
        assert_eq!(d.count(), 25);
        assert_eq!(morph(&d, MorphOp::Erode, 2), m);
    }

    #[test]
    fn components_examples() {
        assert!(connected_components(&BinaryMask::filled(5, 5, false)).is_empty());
        let two = square(20, 1, 1, 4).or(&square(20, 10, 10, 4));
        let cs = connected_components(&two);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].bbox, (1, 1, 4, 4));
        assert_eq!(cs[1].len(), 16);

        let mut diag = BinaryMask::filled(4, 4, false);
        diag.set(1, 1, true);
        diag.set(2, 2, true);
        assert_eq!(connected_components(&diag).len(), 1);
    }

    #[test]
    fn small_components_removed() {
        let mut m = square(30, 2, 2, 5);
        m.set(20, 20, true);
        let cleaned = remove_small_components(&m, 16);
        assert_eq!(cleaned, square(30, 2, 2, 5));
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (2usize..16, 2usize..16).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.4), w * h)
                .prop_map(move |d| BinaryMask::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn open_is_idempotent(m in arb_mask(), r in 1usize..3) {
            let once = morph(&m, MorphOp::Open, r);
            prop_assert_eq!(morph(&once, MorphOp::Open, r), once);
        }

        #[test]
        fn dilate_is_monotone(a in arb_mask(), r in 1usize..3, seed in any::<u64>()) {
            // Superset of `a` obtained by switching on pseudo-random pixels.
            let mut b = a.clone();
            let mut s = seed | 1;
            for y in 0..a.height() {
                for x in 0..a.width() {
                    s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                    if s % 3 == 0 { b.set(x, y, true); }
                }
            }
            let da = morph(&a, MorphOp::Dilate, r);
            let db = morph(&b, MorphOp::Dilate, r);
            prop_assert!(da.is_subset_of(&db));
        }

        #[test]
        fn components_partition_true_pixels(m in arb_mask()) {
            let cs = connected_components(&m);
            let total: usize = cs.iter().map(|c| c.len()).sum();
            prop_assert_eq!(total, m.count());
            let mut rebuilt = BinaryMask::filled(m.width(), m.height(), false);
            for c in &cs {
                for &(x, y) in &c.pixels {
                    prop_assert!(!rebuilt.get(x, y));
                    rebuilt.set(x, y, true);
                }
            }
            prop_assert_eq!(rebuilt, m);
        }
    }
}
