use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthRaster, Plane, Vec3};
use crate::quantify::{DepthClass, QuantMetrics, DEFAULT_DEEP_TOL};
use crate::raster::{BinaryMask, RgbImage};
use crate::segment::{DamageClass, PixelBox};

/// Sub-samples per pixel side used to anti-alias painted primitives.
const SUPERSAMPLE: usize = 4;

/// Shape of a damage primitive on the road, in road coordinates:
/// `x` lateral (right positive) and `z` forward along the road from the
/// point below the camera, both in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rectangle {
        center: [f64; 2],
        size: [f64; 2],
    },
    Ellipse {
        center: [f64; 2],
        radii: [f64; 2],
    },
    /// A stroke of constant width along a polyline.
    Polyline {
        points: Vec<[f64; 2]>,
        width: f64,
    },
    /// Rectangular patch crossed by equally spaced stripes in both
    /// directions (an alligator pattern).
    Grid {
        center: [f64; 2],
        size: [f64; 2],
        spacing: f64,
        width: f64,
    },
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qz) = (a[0] + t * dx - p[0], a[1] + t * dz - p[1]);
    (qx * qx + qz * qz).sqrt()
}

/// Stripe centres `lo, lo + s, …` that fit in `[lo, lo + len]`.
fn stripe_centres(lo: f64, len: f64, spacing: f64) -> impl Iterator<Item = f64> {
    let n = (len / spacing + 1e-9).floor() as usize;
    (0..=n).map(move |i| lo + i as f64 * spacing)
}

/// Length of `[lo, lo + len]` covered by stripes of `width` at `centres`.
fn covered_length(lo: f64, len: f64, spacing: f64, width: f64) -> f64 {
    let hi = lo + len;
    let mut covered = 0.0;
    let mut reach = lo;
    for c in stripe_centres(lo, len, spacing) {
        let a = (c - width / 2.0).max(reach).max(lo);
        let b = (c + width / 2.0).min(hi);
        if b > a {
            covered += b - a;
            reach = b;
        }
    }
    covered
}

impl Shape {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        match self {
            Shape::Rectangle { center, size } => {
                (x - center[0]).abs() <= size[0] / 2.0 && (z - center[1]).abs() <= size[1] / 2.0
            }
            Shape::Ellipse { center, radii } => {
                let (u, v) = ((x - center[0]) / radii[0], (z - center[1]) / radii[1]);
                u * u + v * v <= 1.0
            }
            Shape::Polyline { points, width } => points
                .windows(2)
                .any(|w| segment_distance([x, z], w[0], w[1]) <= width / 2.0),
            Shape::Grid {
                center,
                size,
                spacing,
                width,
            } => {
                let (x0, z0) = (center[0] - size[0] / 2.0, center[1] - size[1] / 2.0);
                if x < x0 || x > x0 + size[0] || z < z0 || z > z0 + size[1] {
                    return false;
                }
                let near =
                    |v: f64, lo: f64, len: f64| stripe_centres(lo, len, *spacing).any(|c| (v - c).abs() <= width / 2.0);
                near(x, x0, size[0]) || near(z, z0, size[1])
            }
        }
    }

    /// `(x_min, x_max, z_min, z_max)` of the painted footprint.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Rectangle { center, size } => (
                center[0] - size[0] / 2.0,
                center[0] + size[0] / 2.0,
                center[1] - size[1] / 2.0,
                center[1] + size[1] / 2.0,
            ),
            Shape::Ellipse { center, radii } => (
                center[0] - radii[0],
                center[0] + radii[0],
                center[1] - radii[1],
                center[1] + radii[1],
            ),
            Shape::Polyline { points, width } => {
                let r = width / 2.0;
                points.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b, c, d), p| (a.min(p[0] - r), b.max(p[0] + r), c.min(p[1] - r), d.max(p[1] + r)),
                )
            }
            Shape::Grid { center, size, .. } => (
                center[0] - size[0] / 2.0,
                center[0] + size[0] / 2.0,
                center[1] - size[1] / 2.0,
                center[1] + size[1] / 2.0,
            ),
        }
    }

    /// Exact painted area in m².
    pub fn area(&self) -> f64 {
        match self {
            Shape::Rectangle { size, .. } => size[0] * size[1],
            Shape::Ellipse { radii, .. } => std::f64::consts::PI * radii[0] * radii[1],
            Shape::Polyline { width, .. } => self.length() * width,
            Shape::Grid {
                center,
                size,
                spacing,
                width,
            } => {
                let fx = covered_length(center[0] - size[0] / 2.0, size[0], *spacing, *width) / size[0];
                let fz = covered_length(center[1] - size[1] / 2.0, size[1], *spacing, *width) / size[1];
                size[0] * size[1] * (1.0 - (1.0 - fx) * (1.0 - fz))
            }
        }
    }

    /// Centre-line length of a polyline, zero for area shapes.
    pub fn length(&self) -> f64 {
        match self {
            Shape::Polyline { points, .. } => points
                .windows(2)
                .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
                .sum(),
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Rectangle { size, .. } => size[0] > 0.0 && size[1] > 0.0,
            Shape::Ellipse { radii, .. } => radii[0] > 0.0 && radii[1] > 0.0,
            Shape::Polyline { points, width } => points.len() >= 2 && *width > 0.0,
            Shape::Grid {
                size, spacing, width, ..
            } => size[0] > 0.0 && size[1] > 0.0 && *spacing > *width && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Spec(format!("malformed shape {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub class: DamageClass,
    pub shape: Shape,
    /// Added to the road intensity inside the shape (negative = darker).
    #[serde(default = "default_delta")]
    pub intensity_delta: f64,
    /// Depth of a pothole floor below the road surface, meters.
    #[serde(default)]
    pub depth_offset: f64,
}

fn default_delta() -> f64 {
    -85.0
}

/// A bright road-marking stripe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marking {
    /// `(x_min, x_max, z_min, z_max)` in road coordinates.
    pub bounds: [f64; 4],
    #[serde(default = "default_marking_intensity")]
    pub intensity: f64,
}

fn default_marking_intensity() -> f64 {
    225.0
}

/// A synthetic scene: flat road, pinhole camera, painted damage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    /// Distance from the camera centre to the road along the camera's −y
    /// axis, meters. With pitch θ the road is `h·cos θ` from the centre.
    pub camera_height: f64,
    /// Downward pitch in radians.
    pub pitch: f64,
    pub road_intensity: f64,
    pub road_half_width: f64,
    pub max_depth: f64,
    pub primitives: Vec<Primitive>,
    pub markings: Vec<Marking>,
    /// Global factor applied to the emitted depth.
    pub gauge: f64,
    pub intensity_noise: f64,
    pub depth_noise: f64,
    pub seed: u64,
    /// Metric margin added around each primitive for its detection box.
    pub box_margin: f64,
    /// Extra pixels added on every side of a detection box (clipped to the
    /// image), like the slack of a real detector's boxes.
    pub box_pad_px: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 640.0,
                cy: 360.0,
            },
            width: 1280,
            height: 720,
            camera_height: 1.3,
            pitch: 0.4f64.asin(),
            road_intensity: 140.0,
            road_half_width: 3.5,
            max_depth: 80.0,
            primitives: Vec::new(),
            markings: Vec::new(),
            gauge: 1.0,
            intensity_noise: 2.0,
            depth_noise: 0.0,
            seed: 0,
            box_margin: 0.15,
            box_pad_px: 6,
        }
    }
}

/// Ground truth of one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveTruth {
    pub class: DamageClass,
    pub metrics: QuantMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneDetection {
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub class: DamageClass,
    pub primitive: usize,
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub image: RgbImage,
    pub depth: DepthRaster,
    pub road: BinaryMask,
    pub marking: BinaryMask,
    pub truth: Vec<PrimitiveTruth>,
    pub detections: Vec<SceneDetection>,
    /// Road plane in camera coordinates at gauge 1.
    pub plane: Plane,
}

/// Camera geometry of a scene: camera axes expressed in road coordinates
/// (x right, y up, z forward along the road).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rig {
    intr: CameraIntrinsics,
    y_axis: Vec3,
    z_axis: Vec3,
    /// Perpendicular distance from the camera centre to the road.
    clearance: f64,
}

impl Rig {
    pub(crate) fn new(spec: &SceneSpec) -> Self {
        let (s, c) = spec.pitch.sin_cos();
        Self {
            intr: spec.intrinsics,
            y_axis: Vec3::new(0.0, c, s),
            z_axis: Vec3::new(0.0, -s, c),
            clearance: spec.camera_height * c,
        }
    }

    /// Road-frame direction of the ray through `(u, v)`, scaled so its
    /// camera-z component is 1.
    fn ray(&self, u: f64, v: f64) -> Vec3 {
        let r = self.intr.ray(u, v);
        Vec3::x() * r.x + self.y_axis * r.y + self.z_axis * r.z
    }

    /// Camera depth where the ray through `(u, v)` meets the plane
    /// `y = −(clearance + drop)`, `None` at or above the horizon.
    fn hit(&self, u: f64, v: f64, drop: f64) -> Option<(f64, f64, f64)> {
        let d = self.ray(u, v);
        if d.y >= -1e-12 {
            return None;
        }
        let t = -(self.clearance + drop) / d.y;
        Some((t, t * d.x, t * d.z))
    }

    /// Road point `(x, z)` to image coordinates, `None` behind the camera.
    pub(crate) fn project(&self, x: f64, z: f64) -> Option<(f64, f64)> {
        let p = Vec3::new(x, -self.clearance, z);
        let cam = Vec3::new(p.x, p.dot(&self.y_axis), p.dot(&self.z_axis));
        (cam.z > 1e-9).then(|| self.intr.project(&cam))
    }

    /// Road point under image point `(u, v)`.
    pub(crate) fn ground(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        self.hit(u, v, 0.0).map(|(_, x, z)| (x, z))
    }

    /// The road plane in camera coordinates.
    pub(crate) fn plane(&self) -> Plane {
        // Up (0, 1, 0) in camera axes is (0, cos, −sin).
        Plane {
            a: 0.0,
            b: self.y_axis.y,
            c: self.z_axis.y,
            d: -self.clearance,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate().map_err(|e| Error::Spec(e.to_string()))?;
        let checks = [
            (self.width >= 8 && self.height >= 8, "image too small"),
            (self.camera_height > 0.0, "camera height must be positive"),
            (self.pitch.abs() < std::f64::consts::FRAC_PI_2, "pitch out of range"),
            (self.gauge > 0.0 && self.gauge.is_finite(), "gauge must be positive"),
            (self.road_half_width > 0.0, "road half-width must be positive"),
            (self.max_depth > 0.0, "max depth must be positive"),
            (self.intensity_noise >= 0.0 && self.depth_noise >= 0.0, "negative noise"),
            (self.box_margin >= 0.0, "negative box margin"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Spec(msg.into()));
            }
        }
        for p in &self.primitives {
            p.shape.validate()?;
            if p.depth_offset < 0.0 {
                return Err(Error::Spec("negative depth offset".into()));
            }
        }
        Ok(())
    }
}

/// Image box covering a road rectangle, or an error when any corner leaves
/// the frame.
fn project_bounds(rig: &Rig, spec: &SceneSpec, b: (f64, f64, f64, f64)) -> Result<PixelBox> {
    let (x0, x1, z0, z1) = b;
    let mut us = Vec::with_capacity(4);
    let mut vs = Vec::with_capacity(4);
    for (x, z) in [(x0, z0), (x1, z0), (x1, z1), (x0, z1)] {
        let (u, v) = rig
            .project(x, z)
            .ok_or_else(|| Error::Spec(format!("road point ({x}, {z}) is behind the camera")))?;
        if !(u >= 0.0 && v >= 0.0 && u <= (spec.width - 1) as f64 && v <= (spec.height - 1) as f64) {
            return Err(Error::Spec(format!(
                "road point ({x}, {z}) projects outside the image at ({u:.1}, {v:.1})"
            )));
        }
        us.push(u);
        vs.push(v);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (u0, u1) = (min(&us).round() as usize, max(&us).round() as usize);
    let (v0, v1) = (min(&vs).round() as usize, max(&vs).round() as usize);
    Ok(PixelBox::new(u0, v0, u1 - u0 + 1, v1 - v0 + 1))
}

fn pad_box(b: PixelBox, pad: usize, width: usize, height: usize) -> PixelBox {
    let (x0, y0) = (b.x.saturating_sub(pad), b.y.saturating_sub(pad));
    let x1 = (b.x + b.w + pad).min(width);
    let y1 = (b.y + b.h + pad).min(height);
    PixelBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// Road-plane bounding rectangle `(x0, x1, z0, z1)` of the footprint of a
/// pixel box (pixel edges, not centres).
pub(crate) fn box_footprint_bounds(rig: &Rig, b: &PixelBox) -> Option<(f64, f64, f64, f64)> {
    let (u0, v0) = (b.x as f64 - 0.5, b.y as f64 - 0.5);
    let (u1, v1) = (u0 + b.w as f64, v0 + b.h as f64);
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (u, v) in [(u0, v0), (u1, v0), (u1, v1), (u0, v1)] {
        let (x, z) = rig.ground(u, v)?;
        bounds = (bounds.0.min(x), bounds.1.max(x), bounds.2.min(z), bounds.3.max(z));
    }
    Some(bounds)
}

fn truth_for(p: &Primitive, footprint: Option<(f64, f64, f64, f64)>) -> QuantMetrics {
    let area = p.shape.area();
    match p.class {
        DamageClass::Pothole => QuantMetrics {
            area_m2: Some(area),
            depth_class: Some(if p.depth_offset > DEFAULT_DEEP_TOL {
                DepthClass::Deep
            } else {
                DepthClass::Shallow
            }),
            ..Default::default()
        },
        DamageClass::LongitudinalCrack | DamageClass::TransverseCrack => QuantMetrics {
            length_m: Some(p.shape.length()),
            ..Default::default()
        },
        DamageClass::AlligatorCrack => {
            let density = footprint.map(|(x0, x1, z0, z1)| 100.0 * area / ((x1 - x0) * (z1 - z0)));
            QuantMetrics {
                area_m2: Some(area),
                crack_density_pct: density,
                ..Default::default()
            }
        }
    }
}

/// Renders the scene with closed-form ray–plane depth.
///
/// Pixels at or above the horizon, or farther than `max_depth`, get invalid
/// depth. The road mask is `|x| ≤ road_half_width` on valid pixels. Damage
/// and markings are painted with 4×4 supersampled coverage. Inside a pothole
/// opening the depth comes from the pit floor or, where the floor is hidden,
/// from the far wall.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let rig = Rig::new(spec);
    let (w, h) = (spec.width, spec.height);

    let mut detections = Vec::with_capacity(spec.primitives.len());
    let mut truth = Vec::with_capacity(spec.primitives.len());
    let mut paint_boxes = Vec::with_capacity(spec.primitives.len());
    for (i, p) in spec.primitives.iter().enumerate() {
        let (x0, x1, z0, z1) = p.shape.bounds();
        if x0 < -spec.road_half_width || x1 > spec.road_half_width {
            return Err(Error::Spec(format!("primitive {i} leaves the road")));
        }
        let m = spec.box_margin;
        let bbox = pad_box(
            project_bounds(&rig, spec, (x0 - m, x1 + m, z0 - m, z1 + m))?,
            spec.box_pad_px,
            spec.width,
            spec.height,
        );
        paint_boxes.push(project_bounds(&rig, spec, (x0, x1, z0, z1))?);
        truth.push(PrimitiveTruth {
            class: p.class,
            metrics: truth_for(p, box_footprint_bounds(&rig, &bbox)),
        });
        detections.push(SceneDetection {
            bbox,
            class: p.class,
            primitive: i,
        });
    }

    let mut intensity = vec![0.0f64; w * h];
    let mut depth = vec![f64::NAN; w * h];
    let mut road = BinaryMask::filled(w, h, false);
    let mut marking = BinaryMask::filled(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            match rig.hit(u as f64, v as f64, 0.0) {
                Some((t, x, _)) if t <= spec.max_depth => {
                    depth[i] = t;
                    let on_road = x.abs() <= spec.road_half_width;
                    road.set(u, v, on_road);
                    intensity[i] = if on_road { spec.road_intensity } else { 95.0 };
                }
                _ => intensity[i] = 205.0,
            }
        }
    }

    let coverage = |u: usize, v: usize, inside: &dyn Fn(f64, f64) -> bool| -> f64 {
        let mut n = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let du = (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                let dv = (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                if let Some((x, z)) = rig.ground(u as f64 + du, v as f64 + dv) {
                    n += inside(x, z) as usize;
                }
            }
        }
        n as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    };

    for mk in &spec.markings {
        let [x0, x1, z0, z1] = mk.bounds;
        let inside = |x: f64, z: f64| x >= x0 && x <= x1 && z >= z0 && z <= z1;
        let Ok(b) = project_bounds(&rig, spec, (x0, x1, z0, z1)) else {
            return Err(Error::Spec(format!("marking {:?} leaves the image", mk.bounds)));
        };
        for v in b.y.saturating_sub(1)..(b.y + b.h + 1).min(h) {
            for u in b.x.saturating_sub(1)..(b.x + b.w + 1).min(w) {
                let c = coverage(u, v, &inside);
                if c > 0.0 {
                    let i = v * w + u;
                    intensity[i] += c * (mk.intensity - intensity[i]);
                }
                if let Some((x, z)) = rig.ground(u as f64, v as f64) {
                    if inside(x, z) {
                        marking.set(u, v, true);
                    }
                }
            }
        }
    }

    for (p, b) in spec.primitives.iter().zip(&paint_boxes) {
        let inside = |x: f64, z: f64| p.shape.contains(x, z);
        for v in b.y.saturating_sub(1)..(b.y + b.h + 1).min(h) {
            for u in b.x.saturating_sub(1)..(b.x + b.w + 1).min(w) {
                let i = v * w + u;
                let c = coverage(u, v, &inside);
                intensity[i] += c * p.intensity_delta;
                if p.depth_offset > 0.0 {
                    if let Some(t) = pit_depth(&rig, &p.shape, p.depth_offset, u as f64, v as f64) {
                        depth[i] = t;
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inoise = Normal::new(0.0, spec.intensity_noise).map_err(|e| Error::Spec(e.to_string()))?;
    let dnoise = Normal::new(0.0, spec.depth_noise).map_err(|e| Error::Spec(e.to_string()))?;
    let mut data = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let n = if spec.intensity_noise > 0.0 {
            inoise.sample(&mut rng)
        } else {
            0.0
        };
        let g = (intensity[i] + n).round().clamp(0.0, 255.0) as u8;
        // A faint warm tint keeps the three channels distinct.
        data.push([g.saturating_add(3), g, g.saturating_sub(3)]);
        if depth[i].is_finite() {
            if spec.depth_noise > 0.0 {
                depth[i] *= 1.0 + dnoise.sample(&mut rng);
            }
            depth[i] *= spec.gauge;
        }
    }

    Ok(RenderedScene {
        image: RgbImage::new(w, h, data)?,
        depth: DepthRaster::new(w, h, depth, false)?,
        road,
        marking,
        truth,
        detections,
        plane: rig.plane(),
    })
}

/// Depth of the pit surface seen through pixel `(u, v)`, if its road hit
/// lies inside the opening.
fn pit_depth(rig: &Rig, shape: &Shape, drop: f64, u: f64, v: f64) -> Option<f64> {
    let (t_top, x, z) = rig.hit(u, v, 0.0)?;
    if !shape.contains(x, z) {
        return None;
    }
    let (t_floor, fx, fz) = rig.hit(u, v, drop)?;
    if shape.contains(fx, fz) {
        return Some(t_floor);
    }
    // The ray meets a wall: bisect for where its ground trace leaves the shape.
    let dir = rig.ray(u, v);
    let (mut lo, mut hi) = (t_top, t_floor);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if shape.contains(mid * dir.x, mid * dir.z) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
