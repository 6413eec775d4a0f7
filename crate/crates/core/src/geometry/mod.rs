//! Scaled camera view transformation.
//!
//! Depth is unprojected into a camera-frame point cloud (+x right, +y up,
//! +z forward). A RANSAC ground plane `ax + by + cz = d` together with the
//! known camera height gives the metric scale `k = |d / (b·h)|`. Each damage
//! crop is then re-viewed from above along its own surface normal and
//! rasterised orthographically into a [`TopView`] with a fixed
//! meters-per-pixel resolution.

mod ransac;
mod scene;
mod topview;
mod transform;

pub use ransac::{fit_plane_lsq, fit_plane_ransac, PlaneFit, RansacParams};
pub use scene::{crop_to_topview, crop_view, fit_ground, CropView, GroundModel, Splat, ViewParams, MIN_VALID_PIXELS};
pub use topview::{orthographic_topview, TopView, TopViewFrame};
pub use transform::{damage_normal, rodrigues_align, Rotation3};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

pub type Vec3 = Vector3<f64>;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Parameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Camera-frame direction through image point `(u, v)` with `z = 1`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, 1.0)
    }

    /// Image coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.cy - self.fy * p.y / p.z)
    }
}

/// Per-pixel depth along the optical axis. Non-finite or non-positive values
/// mark invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Whether values are already metric.
    pub scaled: bool,
}

impl DepthRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>, scaled: bool) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Parameter(format!(
                "depth raster {width}x{height} with {} values",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            scaled,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        let z = self.get(x, y);
        z.is_finite() && z > 0.0
    }

    pub fn valid_mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.is_valid(x, y))
    }

    /// Multiplies every depth by `k` and marks the raster as metric.
    pub fn apply_scale(&self, k: f64) -> Result<Self> {
        check_scale(k)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|z| z * k).collect(),
            scaled: true,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    pub fn apply_scale(&self, k: f64) -> Result<Self> {
        check_scale(k)?;
        Ok(Self {
            points: self.points.iter().map(|p| p * k).collect(),
        })
    }
}

fn check_scale(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("scale must be positive, got {k}")));
    }
    Ok(())
}

/// Back-projects every pixel selected by `roi`.
///
/// Pixel `(u, v)` with depth `Z` maps to `((u−cx)·Z/fx, −(v−cy)·Z/fy, Z)`.
pub fn unproject(depth: &DepthRaster, intr: &CameraIntrinsics, roi: &BinaryMask) -> Result<PointCloud> {
    if !roi.same_dims(depth.width, depth.height) {
        return Err(Error::Parameter("roi does not match depth raster".into()));
    }
    let mut points = Vec::with_capacity(roi.count());
    for (u, v) in roi.iter_true() {
        if !depth.is_valid(u, v) {
            return Err(Error::Data(format!("invalid depth at pixel ({u}, {v})")));
        }
        points.push(unproject_pixel(intr, u as f64, v as f64, depth.get(u, v)));
    }
    Ok(PointCloud { points })
}

#[inline]
pub(crate) fn unproject_pixel(intr: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Vec3 {
    Vec3::new((u - intr.cx) * z / intr.fx, -(v - intr.cy) * z / intr.fy, z)
}

/// Plane `a·x + b·y + c·z = d` with unit normal and `b >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    /// Normalises `(a, b, c)` to unit length and flips the sign so the normal
    /// points up. Raw coefficients are accepted as-is by constructing the
    /// struct directly.
    pub fn from_coefficients(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let norm = (a * a + b * b + c * c).sqrt();
        if !(norm > 0.0 && norm.is_finite()) || !d.is_finite() {
            return Err(Error::Estimation("plane normal has zero length".into()));
        }
        let s = if b < 0.0 { -1.0 / norm } else { 1.0 / norm };
        Ok(Self {
            a: a * s,
            b: b * s,
            c: c * s,
            d: d * s,
        })
    }

    pub fn from_normal_point(normal: &Vec3, point: &Vec3) -> Result<Self> {
        Self::from_coefficients(normal.x, normal.y, normal.z, normal.dot(point))
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.a, self.b, self.c)
    }

    pub fn normal_norm(&self) -> f64 {
        self.normal().norm()
    }

    /// `a·x + b·y + c·z − d`; positive above the plane.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(p) - self.d
    }

    /// The plane after scaling all space by `k`: `d` multiplies, the normal
    /// is unchanged.
    pub fn scaled(&self, k: f64) -> Self {
        Self { d: self.d * k, ..*self }
    }
}

/// Metric scale recovered from the camera height.
///
/// `k` is the ratio of unscaled to metric length: the unscaled road lies
/// `k·h` below the camera where the real one lies `h` below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub k: f64,
    pub h: f64,
}

impl ScaleEstimate {
    /// Factor that turns unscaled lengths into meters, `1 / k`.
    pub fn to_metric(&self) -> f64 {
        1.0 / self.k
    }
}

/// `k = |d / (b·h)|`: the camera sits `|d|/|b|` above the unscaled plane
/// along the vertical, and `h` meters above the real road.
pub fn scale_from_height(plane: &Plane, h: f64) -> Result<ScaleEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("camera height must be positive, got {h}")));
    }
    if plane.b.abs() < 1e-6 {
        return Err(Error::DegeneratePlane(format!(
            "vertical plane (b = {}) cannot be the road",
            plane.b
        )));
    }
    let k = (plane.d / (plane.b * h)).abs();
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::DegeneratePlane(format!(
            "plane through the camera centre (d = {})",
            plane.d
        )));
    }
    Ok(ScaleEstimate { k, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 520.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn unproject_examples() {
        let i = intr();
        assert_eq!(unproject_pixel(&i, 320.0, 240.0, 2.0), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(unproject_pixel(&i, 820.0, 240.0, 1.0), Vec3::new(1.0, 0.0, 1.0));
        // Image rows grow downwards, camera y grows upwards.
        assert!(unproject_pixel(&i, 320.0, 300.0, 1.0).y < 0.0);
    }

    #[test]
    fn unproject_rejects_invalid_depth() {
        let mut values = vec![1.0; 12];
        values[5] = f64::NAN;
        let depth = DepthRaster::new(4, 3, values, false).unwrap();
        let all = BinaryMask::filled(4, 3, true);
        assert!(matches!(unproject(&depth, &intr(), &all), Err(Error::Data(_))));
        let valid = depth.valid_mask();
        assert_eq!(unproject(&depth, &intr(), &valid).unwrap().len(), 11);
    }

    #[test]
    fn table3_scale() {
        let plane = Plane {
            a: 0.066,
            b: 0.914,
            c: 0.4,
            d: 1.188,
        };
        assert!((plane.normal_norm() - 1.0).abs() <= 3e-4);
        let s = scale_from_height(&plane, 1.3).unwrap();
        assert!((s.k - 0.99983).abs() <= 1e-4, "k = {}", s.k);
    }

    #[test]
    fn metric_plane_has_unit_scale() {
        let plane = Plane::from_coefficients(0.0, 1.0, 0.0, 1.3).unwrap();
        assert!((scale_from_height(&plane, 1.3).unwrap().k - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vertical_plane_is_degenerate() {
        let plane = Plane {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 2.0,
        };
        assert!(matches!(scale_from_height(&plane, 1.3), Err(Error::DegeneratePlane(_))));
        let ok = Plane::from_coefficients(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(scale_from_height(&ok, 0.0).is_err());
    }

    #[test]
    fn plane_normalisation() {
        let p = Plane::from_coefficients(0.0, -2.0, 0.0, 2.6).unwrap();
        assert_eq!((p.a, p.b, p.c, p.d), (0.0, 1.0, 0.0, -1.3));
        assert!(Plane::from_coefficients(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn scaling_examples() {
        let cloud = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 4.0)]);
        assert_eq!(cloud.apply_scale(1.0).unwrap(), cloud);
        let scaled = cloud.apply_scale(2.5).unwrap();
        let d0 = (cloud.points[0] - cloud.points[1]).norm();
        let d1 = (scaled.points[0] - scaled.points[1]).norm();
        assert!((d1 - 2.5 * d0).abs() < 1e-12);
        assert!(cloud.apply_scale(0.0).is_err());

        let depth = DepthRaster::new(2, 1, vec![1.0, 2.0], false).unwrap();
        let s = depth.apply_scale(3.0).unwrap();
        assert!(s.scaled);
        assert_eq!(s.values(), &[3.0, 6.0]);
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(x in -5.0f64..5.0, y in -3.0f64..3.0, z in 0.5f64..40.0) {
            let i = intr();
            let p = Vec3::new(x, y, z);
            let (u, v) = i.project(&p);
            let q = unproject_pixel(&i, u, v, z);
            prop_assert!((p - q).norm() < 1e-9);
        }

        #[test]
        fn fitted_plane_scales_with_cloud(k in 0.1f64..10.0, tilt in -0.3f64..0.3) {
            let base = Plane::from_coefficients(tilt, 1.0, 0.4, -1.3).unwrap();
            let scaled = base.scaled(k);
            prop_assert_eq!(scaled.normal(), base.normal());
            prop_assert!((scaled.d - k * base.d).abs() < 1e-12);
        }
    }
}
