use serde::{Deserialize, Serialize};

use super::topview::resampled_topview;
use super::{
    damage_normal, fit_plane_ransac, orthographic_topview, scale_from_height, unproject_pixel, CameraIntrinsics,
    DepthRaster, Plane, PointCloud, RansacParams, ScaleEstimate, TopView, Vec3,
};
use crate::error::{Error, Result};
use crate::raster::BinaryMask;
use crate::segment::{DamageMask, PixelBox};

/// Fewest usable pixels accepted for the road fit and for one crop.
pub const MIN_VALID_PIXELS: usize = 50;

/// How crop points are rasterised into the top view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splat {
    /// One top-view pixel per image pixel.
    Points,
    /// Inverse perspective mapping: each top-view pixel is projected into
    /// the image and the damage mask is sampled bilinearly there. Distant
    /// crops, whose image pixels span many top-view pixels, come out dense
    /// with smooth outlines instead of blocky ones.
    #[default]
    Resampled,
}

/// Parameters of the crop-to-top-view transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewParams {
    pub camera_height: f64,
    pub mpp: f64,
    pub ransac: RansacParams,
    pub seed: u64,
    pub splat: Splat,
}

impl Default for ViewParams {
    fn default() -> Self {
        Self {
            camera_height: 1.3,
            mpp: 0.005,
            ransac: RansacParams::default(),
            seed: 0,
            splat: Splat::Resampled,
        }
    }
}

/// Ground plane of one frame, before and after metric scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundModel {
    /// Plane fitted in the depth estimator's units.
    pub raw_plane: Plane,
    pub scale: ScaleEstimate,
    /// The same plane in meters.
    pub plane: Plane,
    pub inlier_count: usize,
    pub fitted_points: usize,
}

/// Fits the road plane of a frame and recovers the metric scale.
///
/// Road pixels with valid depth are unprojected, subsampled with a fixed
/// stride to at most `ransac.max_points`, and fitted by RANSAC. Depth that is
/// already metric keeps `k = 1`.
pub fn fit_ground(
    depth: &DepthRaster,
    intr: &CameraIntrinsics,
    road_mask: &BinaryMask,
    camera_height: f64,
    ransac: &RansacParams,
    seed: u64,
) -> Result<GroundModel> {
    intr.validate()?;
    if !road_mask.same_dims(depth.width(), depth.height()) {
        return Err(Error::Parameter("road mask does not match depth raster".into()));
    }
    let road: Vec<(usize, usize)> = road_mask.iter_true().filter(|&(u, v)| depth.is_valid(u, v)).collect();
    if road.len() < MIN_VALID_PIXELS {
        return Err(Error::InsufficientData(format!(
            "{} valid road pixels, need {MIN_VALID_PIXELS}",
            road.len()
        )));
    }
    let stride = road.len().div_ceil(ransac.max_points.max(3));
    let cloud = PointCloud::new(
        road.iter()
            .step_by(stride)
            .map(|&(u, v)| unproject_pixel(intr, u as f64, v as f64, depth.get(u, v)))
            .collect(),
    );
    let fit = fit_plane_ransac(&cloud, ransac.tolerance_for(&cloud), ransac.iterations, seed)?;
    let scale = if depth.scaled {
        ScaleEstimate {
            k: 1.0,
            h: camera_height,
        }
    } else {
        scale_from_height(&fit.plane, camera_height)?
    };
    Ok(GroundModel {
        raw_plane: fit.plane,
        plane: fit.plane.scaled(scale.to_metric()),
        scale,
        inlier_count: fit.inlier_count,
        fitted_points: cloud.len(),
    })
}

/// Metric 3D view of one detection crop.
#[derive(Debug, Clone, PartialEq)]
pub struct CropView {
    pub topview: TopView,
    /// Scaled points of the usable crop pixels.
    pub cloud: PointCloud,
    pub damage_flags: Vec<bool>,
    /// Crop surface normal, oriented towards the camera.
    pub normal: Vec3,
    /// Local surface through the undamaged crop points.
    pub local_plane: Plane,
}

impl CropView {
    /// Points flagged as damaged.
    pub fn damaged_cloud(&self) -> PointCloud {
        PointCloud::new(
            self.cloud
                .points
                .iter()
                .zip(&self.damage_flags)
                .filter(|(_, &f)| f)
                .map(|(p, _)| *p)
                .collect(),
        )
    }
}

/// Transforms one crop into a metric top view using an already fitted ground.
///
/// Usable pixels are those inside `bbox`, on the road and with valid depth.
/// `damage` is in crop coordinates (its size must equal the box size).
pub fn crop_view(
    depth: &DepthRaster,
    intr: &CameraIntrinsics,
    road_mask: &BinaryMask,
    ground: &GroundModel,
    bbox: &PixelBox,
    damage: &DamageMask,
    params: &ViewParams,
) -> Result<CropView> {
    if !bbox.fits(depth.width(), depth.height()) {
        return Err(Error::Parameter(format!("box {bbox:?} leaves the frame")));
    }
    if !damage.mask.same_dims(bbox.w, bbox.h) {
        return Err(Error::Parameter(format!(
            "damage mask {}x{} does not match box {}x{}",
            damage.mask.width(),
            damage.mask.height(),
            bbox.w,
            bbox.h
        )));
    }
    let to_metric = ground.scale.to_metric();
    let mut pixels = Vec::new();
    let mut points = Vec::new();
    let mut flags = Vec::new();
    for v in bbox.y..bbox.y + bbox.h {
        for u in bbox.x..bbox.x + bbox.w {
            if road_mask.get(u, v) && depth.is_valid(u, v) {
                pixels.push((u, v));
                points.push(unproject_pixel(intr, u as f64, v as f64, depth.get(u, v) * to_metric));
                flags.push(damage.mask.get(u - bbox.x, v - bbox.y));
            }
        }
    }
    if points.len() < MIN_VALID_PIXELS {
        return Err(Error::InsufficientData(format!(
            "{} usable crop pixels, need {MIN_VALID_PIXELS}",
            points.len()
        )));
    }
    let cloud = PointCloud::new(points);
    // The surface is estimated from the intact road around the damage when
    // there is enough of it: the floor of a deep pothole would otherwise
    // tilt the normal, and at grazing view angles a tilt of a couple of
    // degrees stretches the footprint by tens of percent.
    let undamaged = PointCloud::new(
        cloud
            .points
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| !f)
            .map(|(p, _)| *p)
            .collect(),
    );
    let surface = if undamaged.len() >= MIN_VALID_PIXELS {
        &undamaged
    } else {
        &cloud
    };
    let normal = damage_normal(surface)?;
    let anchor = surface.centroid().expect("non-empty");
    let local_plane = Plane::from_normal_point(&normal, &anchor)?;

    let topview = match params.splat {
        Splat::Points => orthographic_topview(&cloud, &flags, &normal, params.mpp)?,
        Splat::Resampled => {
            let corners = footprint_corners(intr, &pixels, &normal, &anchor);
            if corners.is_empty() {
                return Err(Error::DegeneratePlane("crop surface is seen edge-on".into()));
            }
            let grid = CropGrid::new(bbox, &pixels, &flags);
            resampled_topview(corners.into_iter(), &normal, anchor, params.mpp, |p| {
                if p.z <= 0.0 {
                    return None;
                }
                let (u, v) = intr.project(p);
                grid.sample(u, v)
            })?
        }
    };
    Ok(CropView {
        topview,
        cloud,
        damage_flags: flags,
        normal,
        local_plane,
    })
}

/// Where the corner rays of the usable pixels meet the plane through
/// `anchor`; these bound the top view. Corners that miss the plane in front
/// of the camera are skipped.
fn footprint_corners(intr: &CameraIntrinsics, pixels: &[(usize, usize)], normal: &Vec3, anchor: &Vec3) -> Vec<Vec3> {
    let offset = normal.dot(anchor);
    let mut out = Vec::with_capacity(pixels.len() * 4);
    for &(u, v) in pixels {
        for (du, dv) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
            let ray = intr.ray(u as f64 + du, v as f64 + dv);
            let denom = normal.dot(&ray);
            let t = offset / denom;
            if denom.abs() > 1e-12 && t > 0.0 && t.is_finite() {
                out.push(ray * t);
            }
        }
    }
    out
}

/// Usable pixels and damage flags of a crop, addressable by image position.
struct CropGrid {
    bbox: PixelBox,
    /// `None` where the pixel is off the road or has no depth.
    cells: Vec<Option<bool>>,
}

impl CropGrid {
    fn new(bbox: &PixelBox, pixels: &[(usize, usize)], flags: &[bool]) -> Self {
        let mut cells = vec![None; bbox.w * bbox.h];
        for (&(u, v), &f) in pixels.iter().zip(flags) {
            cells[(v - bbox.y) * bbox.w + (u - bbox.x)] = Some(f);
        }
        Self { bbox: *bbox, cells }
    }

    fn cell(&self, u: isize, v: isize) -> Option<bool> {
        let (x, y) = (u - self.bbox.x as isize, v - self.bbox.y as isize);
        if x < 0 || y < 0 || x >= self.bbox.w as isize || y >= self.bbox.h as isize {
            return None;
        }
        self.cells[y as usize * self.bbox.w + x as usize]
    }

    /// Seen when the pixel containing `(u, v)` is usable; damaged when the
    /// bilinear blend of the surrounding usable flags reaches one half.
    fn sample(&self, u: f64, v: f64) -> Option<bool> {
        self.cell((u + 0.5).floor() as isize, (v + 0.5).floor() as isize)?;
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let (u0, v0) = (u0 as isize, v0 as isize);
        let mut weight = 0.0;
        let mut damage = 0.0;
        for (du, dv, wgt) in [
            (0, 0, (1.0 - fu) * (1.0 - fv)),
            (1, 0, fu * (1.0 - fv)),
            (0, 1, (1.0 - fu) * fv),
            (1, 1, fu * fv),
        ] {
            if let Some(f) = self.cell(u0 + du, v0 + dv) {
                weight += wgt;
                if f {
                    damage += wgt;
                }
            }
        }
        Some(weight > 0.0 && damage >= 0.5 * weight)
    }
}

/// Full transform of one crop: fit the frame's ground, recover the scale and
/// re-view the crop from above.
pub fn crop_to_topview(
    depth: &DepthRaster,
    intr: &CameraIntrinsics,
    road_mask: &BinaryMask,
    bbox: &PixelBox,
    damage: &DamageMask,
    params: &ViewParams,
) -> Result<TopView> {
    let ground = fit_ground(
        depth,
        intr,
        road_mask,
        params.camera_height,
        &params.ransac,
        params.seed,
    )?;
    Ok(crop_view(depth, intr, road_mask, &ground, bbox, damage, params)?.topview)
}
