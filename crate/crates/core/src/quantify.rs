//! Per-instance damage metrics and risk scores.
//!
//! Which metric a class gets:
//!
//! | class                    | metrics                     | risk                 |
//! |--------------------------|-----------------------------|----------------------|
//! | pothole (deep)           | area, depth class           | `exp(area)`          |
//! | pothole (shallow)        | area, depth class           | `area`               |
//! | longitudinal, transverse | length                      | `length`             |
//! | alligator                | area, crack density         | `area × density/100` |
//!
//! Crack density enters the alligator risk as a fraction while it is
//! reported in percent.

use std::collections::HashMap;
use std::fmt;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Plane, PointCloud, TopView};
use crate::raster::{distance_to_background, prune_spurs, skeleton_branches, skeletonize, BinaryMask, Branch};
use crate::segment::DamageClass;

/// Default residual (meters) above which a pothole counts as deep.
pub const DEFAULT_DEEP_TOL: f64 = 0.05;
/// Side branches of a crack skeleton shorter than this many local
/// half-widths are treated as boundary noise.
pub const SPUR_FACTOR: f64 = 2.0;
/// Fewest pothole points accepted by [`classify_depth`].
pub const MIN_DEPTH_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthClass {
    Shallow,
    Deep,
}

impl DepthClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            DepthClass::Shallow => "shallow",
            DepthClass::Deep => "deep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RiskLevel::Low => "Low",
            RiskLevel::Medium => "Medium",
            RiskLevel::High => "High",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantMetrics {
    pub area_m2: Option<f64>,
    pub length_m: Option<f64>,
    pub crack_density_pct: Option<f64>,
    pub depth_class: Option<DepthClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub value: f64,
    pub level: RiskLevel,
}

/// Risk cutoffs of one class: `value ≤ low_max` is Low, `≤ medium_max` is
/// Medium, anything above is High.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_max: f64,
    pub medium_max: f64,
}

impl Band {
    pub fn new(low_max: f64, medium_max: f64) -> Result<Self> {
        let band = Self { low_max, medium_max };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_max > 0.0 && self.low_max < self.medium_max && self.medium_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "risk band needs 0 < low_max < medium_max, got ({}, {})",
                self.low_max, self.medium_max
            )));
        }
        Ok(())
    }

    pub fn level(&self, value: f64) -> RiskLevel {
        if value <= self.low_max {
            RiskLevel::Low
        } else if value <= self.medium_max {
            RiskLevel::Medium
        } else {
            RiskLevel::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskThresholds {
    pub pothole: Band,
    /// Shared by longitudinal and transverse cracks, in meters.
    pub linear_crack: Band,
    pub alligator_crack: Band,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        Self {
            pothole: Band {
                low_max: 1.2,
                medium_max: 2.0,
            },
            linear_crack: Band {
                low_max: 1.0,
                medium_max: 3.0,
            },
            alligator_crack: Band {
                low_max: 0.5,
                medium_max: 1.5,
            },
        }
    }
}

impl RiskThresholds {
    pub fn get(&self, class: DamageClass) -> Band {
        match class {
            DamageClass::Pothole => self.pothole,
            DamageClass::AlligatorCrack => self.alligator_crack,
            DamageClass::LongitudinalCrack | DamageClass::TransverseCrack => self.linear_crack,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pothole.validate()?;
        self.linear_crack.validate()?;
        self.alligator_crack.validate()
    }
}

/// Damaged area in square meters.
pub fn measure_area(view: &TopView) -> f64 {
    view.damaged_count() as f64 * view.mpp * view.mpp
}

/// Length of a thin mask in pixel steps: 4-neighbour links count 1 and
/// diagonal links `√2`. A diagonal link is left out when the two pixels
/// already share a 4-neighbour in the mask, since that corner is walked
/// through the 4-links.
pub fn skeleton_steps(skeleton: &BinaryMask) -> f64 {
    let on = |x: isize, y: isize| skeleton.get_or_false(x, y);
    let mut straight = 0usize;
    let mut diagonal = 0usize;
    for (x, y) in skeleton.iter_true() {
        let (x, y) = (x as isize, y as isize);
        straight += on(x + 1, y) as usize + on(x, y + 1) as usize;
        for dx in [-1, 1] {
            if on(x + dx, y + 1) && !on(x + dx, y) && !on(x, y + 1) {
                diagonal += 1;
            }
        }
    }
    straight as f64 + diagonal as f64 * std::f64::consts::SQRT_2
}

/// Length of one branch after a moving-average smoothing whose half-window
/// at each pixel is the local half-width `dist` of the mask (rounded, and
/// shrunk near open ends so they stay fixed). Outline wiggles finer than
/// the mask's own thickness, such as the staircase a perspective view
/// leaves along a diagonal crack, are averaged out; a 1-pixel-wide line
/// keeps its plain step count.
fn smoothed_branch_length(branch: &Branch, dist: &[f64], width: usize) -> f64 {
    let pts = &branch.pixels;
    let n = pts.len();
    if n < 2 {
        return 0.0;
    }
    let at = |i: isize| -> (f64, f64) {
        let p = pts[i.rem_euclid(n as isize) as usize];
        (p.0 as f64, p.1 as f64)
    };
    let smoothed: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (x, y) = pts[i];
            let mut r = dist[y * width + x].round().max(1.0) as usize - 1;
            r = if branch.closed {
                r.min(n / 4)
            } else {
                r.min(i).min(n - 1 - i)
            };
            let (mut sx, mut sy) = (0.0, 0.0);
            for k in -(r as isize)..=(r as isize) {
                let (px, py) = at(i as isize + k);
                sx += px;
                sy += py;
            }
            let m = (2 * r + 1) as f64;
            (sx / m, sy / m)
        })
        .collect();
    let mut length: f64 = smoothed
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum();
    if branch.closed {
        let (a, b) = (smoothed[n - 1], smoothed[0]);
        length += (b.0 - a.0).hypot(b.1 - a.1);
    }
    length
}

/// Longest shortest path through a set of branches, with branch lengths as
/// edge weights, measured per connected piece and summed. Junction-free
/// loops count in full.
fn geodesic_length(branches: &[(Branch, f64)]) -> f64 {
    let mut total = 0.0;
    let mut graph: UnGraph<(), f64> = UnGraph::new_undirected();
    let mut nodes: HashMap<(usize, usize), NodeIndex> = HashMap::new();
    for (b, len) in branches {
        if b.closed {
            total += len;
            continue;
        }
        let mut node = |p: (usize, usize)| *nodes.entry(p).or_insert_with(|| graph.add_node(()));
        let a = node(b.pixels[0]);
        let z = node(*b.pixels.last().expect("non-empty"));
        if a != z {
            graph.add_edge(a, z, *len);
        }
    }
    let farthest = |start: NodeIndex| {
        dijkstra(&graph, start, None, |e| *e.weight())
            .into_iter()
            .fold((start, 0.0), |best, (n, d)| if d > best.1 { (n, d) } else { best })
    };
    let mut done = vec![false; graph.node_count()];
    for start in graph.node_indices() {
        if done[start.index()] {
            continue;
        }
        for (n, _) in dijkstra(&graph, start, None, |e| *e.weight()) {
            done[n.index()] = true;
        }
        let (a, _) = farthest(start);
        total += farthest(a).1;
    }
    total
}

/// Centre-line length of a linear crack in meters.
///
/// The damaged layer is thinned, short spurs are pruned (see
/// [`prune_spurs`] and [`SPUR_FACTOR`]), each branch is smoothed at the
/// scale of the local mask width, and every connected piece contributes its
/// longest path. Pieces are summed, so a fragmented crack still adds up. On
/// a 1-pixel line the result equals [`skeleton_steps`] × mpp.
pub fn measure_length(view: &TopView) -> f64 {
    let skeleton = prune_spurs(&skeletonize(&view.damaged), &view.damaged, SPUR_FACTOR);
    let dist = distance_to_background(&view.damaged);
    let branches: Vec<(Branch, f64)> = skeleton_branches(&skeleton)
        .into_iter()
        .map(|b| {
            let len = smoothed_branch_length(&b, &dist, view.damaged.width());
            (b, len)
        })
        .collect();
    geodesic_length(&branches) * view.mpp
}

/// Damaged share of the occupied region's bounding box, in percent.
pub fn crack_density(view: &TopView) -> Result<f64> {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for (x, y) in view.occupied.iter_true() {
        bounds = Some(match bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    let (x0, y0, x1, y1) = bounds.ok_or_else(|| Error::DegenerateInput("top view has no occupied pixels".into()))?;
    let box_pixels = (x1 - x0 + 1) * (y1 - y0 + 1);
    let damaged = (y0..=y1)
        .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
        .filter(|&(x, y)| view.damaged.get(x, y))
        .count();
    Ok(100.0 * damaged as f64 / box_pixels as f64)
}

/// Nearest-rank percentile (`p` in `(0, 100]`) of an unsorted sample.
pub(crate) fn nearest_rank(values: &mut [f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    let idx = rank.clamp(1, values.len()) - 1;
    let (_, v, _) = values.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

/// Deep when the 95th-percentile depth below `plane` exceeds `deep_tol`.
///
/// Residuals are `d − (a·x + b·y + c·z)`, positive below the surface.
pub fn classify_depth(cloud: &PointCloud, plane: &Plane, deep_tol: f64) -> Result<DepthClass> {
    if cloud.len() < MIN_DEPTH_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} pothole points, need {MIN_DEPTH_POINTS}",
            cloud.len()
        )));
    }
    let mut residuals: Vec<f64> = cloud.points.iter().map(|p| -plane.signed_distance(p)).collect();
    let p95 = nearest_rank(&mut residuals, 95.0);
    Ok(if p95 > deep_tol {
        DepthClass::Deep
    } else {
        DepthClass::Shallow
    })
}

fn required(value: Option<f64>, name: &str, class: DamageClass) -> Result<f64> {
    match value {
        Some(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(Error::Contract(format!("{name} = {v} for {class}"))),
        None => Err(Error::Contract(format!("{class} risk needs {name}"))),
    }
}

pub fn risk_score(metrics: &QuantMetrics, class: DamageClass, thresholds: &RiskThresholds) -> Result<RiskScore> {
    let value = match class {
        DamageClass::Pothole => {
            let area = required(metrics.area_m2, "area_m2", class)?;
            match metrics.depth_class {
                Some(DepthClass::Deep) => area.exp(),
                Some(DepthClass::Shallow) => area,
                None => return Err(Error::Contract("pothole risk needs depth_class".into())),
            }
        }
        DamageClass::LongitudinalCrack | DamageClass::TransverseCrack => required(metrics.length_m, "length_m", class)?,
        DamageClass::AlligatorCrack => {
            let area = required(metrics.area_m2, "area_m2", class)?;
            let density = required(metrics.crack_density_pct, "crack_density_pct", class)?;
            area * (density / 100.0)
        }
    };
    Ok(RiskScore {
        value,
        level: thresholds.get(class).level(value),
    })
}

/// Measures the metrics `class` needs from its top view. `depth` is the
/// pothole depth class, ignored for cracks.
pub fn quantify_view(view: &TopView, class: DamageClass, depth: Option<DepthClass>) -> Result<QuantMetrics> {
    Ok(match class {
        DamageClass::Pothole => QuantMetrics {
            area_m2: Some(measure_area(view)),
            depth_class: depth,
            ..Default::default()
        },
        DamageClass::LongitudinalCrack | DamageClass::TransverseCrack => QuantMetrics {
            length_m: Some(measure_length(view)),
            ..Default::default()
        },
        DamageClass::AlligatorCrack => QuantMetrics {
            area_m2: Some(measure_area(view)),
            crack_density_pct: Some(crack_density(view)?),
            ..Default::default()
        },
    })
}
