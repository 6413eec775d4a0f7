use super::BinaryMask;

// Neighbour offsets clockwise from north: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn ring(mask: &BinaryMask, x: usize, y: usize) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        n[k] = mask.get_or_false(x as isize + dx, y as isize + dy);
    }
    n
}

/// Yokoi connectivity number for 8-connected foreground; a border pixel is
/// simple (deletable without changing topology) iff this equals 1.
fn yokoi8(n: &[bool; 8]) -> u32 {
    // Yokoi indexes neighbours from E counter-clockwise: E, NE, N, NW, W, SW, S, SE.
    let x = [n[2], n[1], n[0], n[7], n[6], n[5], n[4], n[3]];
    let bg = |k: usize| !x[k % 8] as u32;
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| bg(k) - bg(k) * bg(k + 1) * bg(k + 2))
        .sum()
}

// Border directions peeled in turn: N, S, E, W (indices into `RING`).
const BORDERS: [usize; 4] = [0, 4, 2, 6];

/// Thins every 8-connected component to a one-pixel-wide centreline.
///
/// Each round peels the north, south, east and west borders in turn. A
/// border pixel is removed only if it is simple (its removal keeps the
/// local topology) and is not an end point. Simplicity is re-checked at the
/// moment of removal, so the component count never changes.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    let (w, h) = (mask.width(), mask.height());
    loop {
        let mut changed = false;
        for border in BORDERS {
            // End-point and simplicity are judged on the raster as it was at
            // the start of the pass; removal re-checks simplicity only.
            let mut candidates = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !out.get(x, y) {
                        continue;
                    }
                    let n = ring(&out, x, y);
                    if !n[border] && n.iter().filter(|&&v| v).count() >= 2 && yokoi8(&n) == 1 {
                        candidates.push((x, y));
                    }
                }
            }
            for (x, y) in candidates {
                if yokoi8(&ring(&out, x, y)) == 1 {
                    out.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}
