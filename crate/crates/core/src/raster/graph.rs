//! Skeleton graphs: links, branches, and removal of short side branches
//! left by boundary bumps.

use std::collections::HashSet;
use std::f64::consts::SQRT_2;

use super::BinaryMask;

/// Chamfer (3-4) distance from each pixel to the nearest background pixel,
/// in pixel units. Pixels outside the raster count as background.
pub fn distance_to_background(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let big = u32::MAX / 2;
    let mut d: Vec<u32> = mask.data().iter().map(|&m| if m { big } else { 0 }).collect();
    let at = |d: &[u32], x: isize, y: isize| -> u32 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [
                at(&d, x - 1, y) + 3,
                at(&d, x, y - 1) + 3,
                at(&d, x - 1, y - 1) + 4,
                at(&d, x + 1, y - 1) + 4,
            ];
            d[i] = d[i].min(*best.iter().min().expect("non-empty"));
        }
    }
    for y in (0..h as isize).rev() {
        for x in (0..w as isize).rev() {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let best = [
                at(&d, x + 1, y) + 3,
                at(&d, x, y + 1) + 3,
                at(&d, x + 1, y + 1) + 4,
                at(&d, x - 1, y + 1) + 4,
            ];
            d[i] = d[i].min(*best.iter().min().expect("non-empty"));
        }
    }
    d.into_iter().map(|v| v as f64 / 3.0).collect()
}

/// Linked neighbours of `(x, y)` with their step lengths. Diagonals that
/// cut a corner already walked by two 4-links are not links.
fn links(skel: &BinaryMask, x: usize, y: usize) -> Vec<((usize, usize), f64)> {
    let on = |x: isize, y: isize| skel.get_or_false(x, y);
    let (xi, yi) = (x as isize, y as isize);
    let mut out = Vec::with_capacity(4);
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        if on(xi + dx, yi + dy) {
            out.push((((xi + dx) as usize, (yi + dy) as usize), 1.0));
        }
    }
    for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if on(xi + dx, yi + dy) && !on(xi + dx, yi) && !on(xi, yi + dy) {
            out.push((((xi + dx) as usize, (yi + dy) as usize), SQRT_2));
        }
    }
    out
}

struct Spur {
    pixels: Vec<(usize, usize)>,
    junction: (usize, usize),
    length: f64,
}

fn trace(skel: &BinaryMask, start: (usize, usize)) -> Option<Spur> {
    let mut pixels = vec![start];
    let mut prev: Option<(usize, usize)> = None;
    let mut cur = start;
    let mut length = 0.0;
    loop {
        let next: Vec<_> = links(skel, cur.0, cur.1)
            .into_iter()
            .filter(|(p, _)| Some(*p) != prev)
            .collect();
        let degree = next.len() + prev.is_some() as usize;
        if cur != start && degree >= 3 {
            pixels.pop();
            return Some(Spur {
                pixels,
                junction: cur,
                length,
            });
        }
        let [(p, step)] = next[..] else {
            // A free end (isolated path) or a dead start: not a side branch.
            return None;
        };
        length += step;
        prev = Some(cur);
        cur = p;
        pixels.push(cur);
    }
}

/// Removes side branches that end freely and are shorter than `factor`
/// times the mask's half-width at their junction. Thinning grows such a
/// branch from every bump on the mask boundary; real branches are much
/// longer than the local width. Shorter spurs go first, one per junction
/// per pass, so a fork at the end of a line keeps its longer arm.
pub fn prune_spurs(skeleton: &BinaryMask, mask: &BinaryMask, factor: f64) -> BinaryMask {
    let dist = distance_to_background(mask);
    let w = mask.width();
    let mut skel = skeleton.clone();
    loop {
        let mut spurs: Vec<Spur> = skel
            .iter_true()
            .filter(|&(x, y)| links(&skel, x, y).len() == 1)
            .filter_map(|p| trace(&skel, p))
            .filter(|s| s.length < factor * dist[s.junction.1 * w + s.junction.0])
            .collect();
        if spurs.is_empty() {
            return skel;
        }
        spurs.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.pixels[0].cmp(&b.pixels[0])));
        let mut touched = HashSet::new();
        for s in spurs {
            if touched.insert(s.junction) {
                for (x, y) in s.pixels {
                    skel.set(x, y, false);
                }
            }
        }
    }
}

/// One piece of a skeleton between nodes (end points or junctions), as an
/// ordered pixel path. Closed loops without junctions are single branches
/// with `closed` set and the start pixel not repeated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub pixels: Vec<(usize, usize)>,
    pub closed: bool,
}

/// Splits a skeleton into branches. Links follow the same rule as the step
/// count: 4-neighbours, plus diagonals that do not cut a walked corner.
/// Junction pixels are shared by the branches that meet there.
pub fn skeleton_branches(skel: &BinaryMask) -> Vec<Branch> {
    let w = skel.width();
    let idx = |p: (usize, usize)| p.1 * w + p.0;
    let degree = |p: (usize, usize)| links(skel, p.0, p.1).len();
    let mut used_links: HashSet<(usize, usize)> = HashSet::new();
    let mut visited = vec![false; w * skel.height()];
    let mut out = Vec::new();

    let nodes: Vec<(usize, usize)> = skel.iter_true().filter(|&p| degree(p) != 2).collect();
    for &n in &nodes {
        visited[idx(n)] = true;
        let around = links(skel, n.0, n.1);
        if around.is_empty() {
            out.push(Branch {
                pixels: vec![n],
                closed: false,
            });
        }
        for (m, _) in around {
            if used_links.contains(&(idx(n), idx(m))) {
                continue;
            }
            let mut pixels = vec![n, m];
            let (mut prev, mut cur) = (n, m);
            while degree(cur) == 2 {
                visited[idx(cur)] = true;
                let next = links(skel, cur.0, cur.1)
                    .into_iter()
                    .map(|(p, _)| p)
                    .find(|&p| p != prev)
                    .expect("degree 2");
                prev = cur;
                cur = next;
                pixels.push(cur);
                if cur == n {
                    break;
                }
            }
            used_links.insert((idx(n), idx(m)));
            used_links.insert((idx(cur), idx(prev)));
            out.push(Branch { pixels, closed: false });
        }
    }
    // What is left is loops made only of degree-2 pixels.
    for start in skel.iter_true() {
        if visited[idx(start)] {
            continue;
        }
        let mut pixels = vec![start];
        visited[idx(start)] = true;
        let mut prev = start;
        let mut cur = links(skel, start.0, start.1)[0].0;
        while cur != start {
            visited[idx(cur)] = true;
            pixels.push(cur);
            let next = links(skel, cur.0, cur.1)
                .into_iter()
                .map(|(p, _)| p)
                .find(|&p| p != prev)
                .expect("degree 2");
            prev = cur;
            cur = next;
        }
        out.push(Branch { pixels, closed: true });
    }
    out
}
