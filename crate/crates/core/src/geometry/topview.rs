use super::{rodrigues_align, PointCloud, Rotation3, Vec3};
use crate::error::{Error, Result};
use crate::raster::{morph, BinaryMask, MorphOp};

/// Empty pixels kept around the projected extent.
const BORDER_PX: usize = 2;

/// Maps camera-frame points into a top-view raster.
///
/// The rotation takes the reversed surface normal onto the viewing (+z)
/// axis, so the virtual camera looks straight down onto the surface. In the
/// rotated frame +x is image right and +y is image up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopViewFrame {
    pub rotation: Rotation3,
    /// Camera-frame point placed at the raster centre.
    pub center: Vec3,
    pub mpp: f64,
    /// `(column, row)` of the raster centre.
    pub center_px: (usize, usize),
}

impl TopViewFrame {
    fn new(normal: &Vec3, center: Vec3, mpp: f64) -> Result<Self> {
        if !(mpp > 0.0 && mpp.is_finite()) {
            return Err(Error::Parameter(format!(
                "meters per pixel must be positive, got {mpp}"
            )));
        }
        let rotation = rodrigues_align(&(-normal), &Vec3::z())?;
        Ok(Self {
            rotation,
            center,
            mpp,
            center_px: (0, 0),
        })
    }

    /// In-plane metric coordinates `(right, up)` relative to the centre.
    pub fn plane_coords(&self, p: &Vec3) -> (f64, f64) {
        let q = self.rotation.apply(&(p - self.center));
        (q.x, q.y)
    }

    /// Continuous pixel coordinates `(column, row)`; pixel `(i, j)` covers
    /// `[i − ½, i + ½) × [j − ½, j + ½)`.
    pub fn pixel_coords(&self, p: &Vec3) -> (f64, f64) {
        let (x, y) = self.plane_coords(p);
        (
            self.center_px.0 as f64 + x / self.mpp,
            self.center_px.1 as f64 - y / self.mpp,
        )
    }
}

/// Orthographic metric raster of one damage crop.
#[derive(Debug, Clone, PartialEq)]
pub struct TopView {
    pub occupied: BinaryMask,
    pub damaged: BinaryMask,
    pub mpp: f64,
    pub frame: TopViewFrame,
}

impl TopView {
    /// A view built directly from masks (no camera geometry attached).
    pub fn from_masks(occupied: BinaryMask, damaged: BinaryMask, mpp: f64) -> Result<Self> {
        if !damaged.same_dims(occupied.width(), occupied.height()) {
            return Err(Error::Parameter("top-view masks differ in size".into()));
        }
        let mut frame = TopViewFrame::new(&(-Vec3::z()), Vec3::zeros(), mpp)?;
        frame.center_px = (occupied.width() / 2, occupied.height() / 2);
        Ok(Self {
            occupied,
            damaged,
            mpp,
            frame,
        })
    }

    pub fn width(&self) -> usize {
        self.occupied.width()
    }

    pub fn height(&self) -> usize {
        self.occupied.height()
    }

    pub fn damaged_count(&self) -> usize {
        self.damaged.count()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.count()
    }

    /// In-plane coordinates of the centre of pixel `(0, 0)`.
    pub fn origin(&self) -> (f64, f64) {
        let (cx, cy) = self.frame.center_px;
        (-(cx as f64) * self.mpp, cy as f64 * self.mpp)
    }

    /// Single-pass 3×3 dilation of both layers, for display.
    pub fn dilated(&self) -> Self {
        Self {
            occupied: morph(&self.occupied, MorphOp::Dilate, 1),
            damaged: morph(&self.damaged, MorphOp::Dilate, 1),
            ..self.clone()
        }
    }
}

/// Sizes a frame so every point fits with a border, centre pixel included.
fn sized_frame(mut frame: TopViewFrame, points: impl Iterator<Item = Vec3>) -> (TopViewFrame, usize, usize) {
    let (mut hx, mut hy) = (0.0f64, 0.0f64);
    for p in points {
        let (x, y) = frame.plane_coords(&p);
        hx = hx.max(x.abs());
        hy = hy.max(y.abs());
    }
    let half_w = (hx / frame.mpp + 0.5).ceil() as usize + BORDER_PX;
    let half_h = (hy / frame.mpp + 0.5).ceil() as usize + BORDER_PX;
    frame.center_px = (half_w, half_h);
    (frame, 2 * half_w + 1, 2 * half_h + 1)
}

fn pixel_index(c: f64) -> isize {
    (c + 0.5).floor() as isize
}

/// Point-splat orthographic projection: every point marks the pixel it falls
/// in as occupied, and as damaged when its flag is set.
pub fn orthographic_topview(cloud: &PointCloud, damage_flags: &[bool], normal: &Vec3, mpp: f64) -> Result<TopView> {
    let centroid = cloud
        .centroid()
        .ok_or_else(|| Error::Parameter("empty point cloud".into()))?;
    if damage_flags.len() != cloud.len() {
        return Err(Error::Parameter(format!(
            "{} damage flags for {} points",
            damage_flags.len(),
            cloud.len()
        )));
    }
    let base = TopViewFrame::new(normal, centroid, mpp)?;
    let (frame, w, h) = sized_frame(base, cloud.points.iter().copied());
    let mut occupied = BinaryMask::filled(w, h, false);
    let mut damaged = BinaryMask::filled(w, h, false);
    for (p, &flag) in cloud.points.iter().zip(damage_flags) {
        let (c, r) = frame.pixel_coords(p);
        let (i, j) = (pixel_index(c) as usize, pixel_index(r) as usize);
        occupied.set(i, j, true);
        if flag {
            damaged.set(i, j, true);
        }
    }
    Ok(TopView {
        occupied,
        damaged,
        mpp,
        frame,
    })
}

/// Top view by inverse mapping: every raster pixel centre, taken as a point
/// of the plane through `center`, is handed to `sample`, which reports
/// whether that point is seen (`Some`) and damaged (`Some(true)`). The
/// raster covers `extent`.
pub(crate) fn resampled_topview(
    extent: impl Iterator<Item = Vec3>,
    normal: &Vec3,
    center: Vec3,
    mpp: f64,
    mut sample: impl FnMut(&Vec3) -> Option<bool>,
) -> Result<TopView> {
    let base = TopViewFrame::new(normal, center, mpp)?;
    let (frame, w, h) = sized_frame(base, extent);
    let back = frame.rotation.inverse();
    let mut occupied = BinaryMask::filled(w, h, false);
    let mut damaged = BinaryMask::filled(w, h, false);
    for j in 0..h {
        for i in 0..w {
            let x = (i as f64 - frame.center_px.0 as f64) * mpp;
            let y = (frame.center_px.1 as f64 - j as f64) * mpp;
            let p = center + back.apply(&Vec3::new(x, y, 0.0));
            if let Some(flag) = sample(&p) {
                occupied.set(i, j, true);
                damaged.set(i, j, flag);
            }
        }
    }
    Ok(TopView {
        occupied,
        damaged,
        mpp,
        frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_distances_preserved() {
        let cloud = PointCloud::new(vec![Vec3::new(-0.5, -1.3, 6.0), Vec3::new(0.5, -1.3, 6.0)]);
        let view = orthographic_topview(&cloud, &[false, true], &Vec3::y(), 0.005).unwrap();
        let cols: Vec<(usize, usize)> = view.occupied.iter_true().collect();
        assert_eq!(cols.len(), 2);
        let dx = cols[0].0.abs_diff(cols[1].0) as i64;
        assert!((dx - 200).abs() <= 1, "{dx}");
        assert_eq!(view.damaged_count(), 1);
    }

    #[test]
    fn far_is_up() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, -1.3, 5.0), Vec3::new(0.0, -1.3, 6.0)]);
        let view = orthographic_topview(&cloud, &[true, false], &Vec3::y(), 0.01).unwrap();
        let near = view.damaged.iter_true().next().unwrap();
        let far = view.occupied.and_not(&view.damaged).iter_true().next().unwrap();
        assert!(far.1 < near.1);
    }

    #[test]
    fn all_damaged_flags_every_pixel() {
        let pts: Vec<Vec3> = (0..50)
            .map(|i| Vec3::new(i as f64 * 0.01, -1.3, 5.0 + (i % 7) as f64 * 0.02))
            .collect();
        let flags = vec![true; pts.len()];
        let view = orthographic_topview(&PointCloud::new(pts), &flags, &Vec3::y(), 0.005).unwrap();
        assert_eq!(view.damaged, view.occupied);
    }

    #[test]
    fn border_and_centre() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, -1.0, 4.0)]);
        let view = orthographic_topview(&cloud, &[true], &Vec3::y(), 0.01).unwrap();
        assert_eq!((view.width(), view.height()), (7, 7));
        assert!(view.damaged.get(3, 3));
        assert_eq!(view.origin(), (-0.03, 0.03));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(orthographic_topview(&PointCloud::default(), &[], &Vec3::y(), 0.005).is_err());
        let cloud = PointCloud::new(vec![Vec3::new(0.0, -1.0, 4.0)]);
        assert!(orthographic_topview(&cloud, &[true], &Vec3::y(), 0.0).is_err());
        assert!(orthographic_topview(&cloud, &[], &Vec3::y(), 0.01).is_err());
    }
}
