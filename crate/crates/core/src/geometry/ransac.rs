use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Plane, PointCloud, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier band as a fraction of the cloud's median depth.
    pub relative_tol: f64,
    /// Road clouds larger than this are subsampled with a fixed stride
    /// before fitting.
    pub max_points: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            relative_tol: 0.02,
            max_points: 20_000,
        }
    }
}

impl RansacParams {
    /// Absolute inlier tolerance for `cloud`: `relative_tol × median z`.
    pub fn tolerance_for(&self, cloud: &PointCloud) -> f64 {
        if cloud.is_empty() {
            return 0.0;
        }
        let mut z: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
        let mid = z.len() / 2;
        let (_, m, _) = z.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        self.relative_tol * *m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Inliers of the winning hypothesis, the set the final plane was refit to.
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
}

/// Least-squares plane through `points`: the normal is the direction of
/// least variance of the centred points (smallest singular direction).
///
/// Also returns the scatter eigenvalues in ascending order.
pub fn fit_plane_lsq(points: &[Vec3]) -> Result<(Plane, [f64; 3])> {
    if points.len() < 3 {
        return Err(Error::Estimation(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let centroid: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let q = p - centroid;
        scatter += q * q.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.map(|i| eig.eigenvalues[i].max(0.0));
    if !(values[2] > 0.0) || values[1] <= 1e-12 * values[2] {
        return Err(Error::Estimation("points are collinear or coincident".into()));
    }
    let normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    Ok((Plane::from_normal_point(&normal, &centroid)?, values))
}

/// Plane through three points, `None` when they are (nearly) collinear.
fn plane_through(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Option<(Vec3, f64)> {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let n = e1.cross(&e2);
    let norm = n.norm();
    if !(norm > 1e-12 * e1.norm() * e2.norm()) {
        return None;
    }
    let n = n / norm;
    Some((n, n.dot(p0)))
}

/// RANSAC ground-plane estimate.
///
/// Each iteration samples three distinct points; the hypothesis with the most
/// points within `inlier_tol` wins and is refit to its inliers by least
/// squares. Deterministic for a fixed `seed`.
pub fn fit_plane_ransac(cloud: &PointCloud, inlier_tol: f64, iterations: usize, seed: u64) -> Result<PlaneFit> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(Error::Estimation(format!(
            "RANSAC needs at least 3 points, got {}",
            pts.len()
        )));
    }
    if !(inlier_tol >= 0.0) {
        return Err(Error::Parameter(format!("inlier tolerance {inlier_tol}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec3, f64)> = None;
    for _ in 0..iterations {
        let idx = sample(&mut rng, pts.len(), 3);
        let Some((n, d)) = plane_through(&pts[idx.index(0)], &pts[idx.index(1)], &pts[idx.index(2)]) else {
            continue;
        };
        let count = pts.iter().filter(|p| (n.dot(p) - d).abs() <= inlier_tol).count();
        if best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, n, d));
        }
    }
    let Some((_, n, d)) = best else {
        return Err(Error::Estimation("every RANSAC sample was collinear".into()));
    };
    let inliers: Vec<bool> = pts.iter().map(|p| (n.dot(p) - d).abs() <= inlier_tol).collect();
    let chosen: Vec<Vec3> = pts
        .iter()
        .zip(&inliers)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| *p)
        .collect();
    let (plane, _) = fit_plane_lsq(&chosen)?;
    Ok(PlaneFit {
        plane,
        inlier_count: chosen.len(),
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn plane_points(plane: &Plane, n: usize, seed: u64) -> Vec<Vec3> {
        // Parametrise the plane by two in-plane axes through its foot point.
        let normal = plane.normal();
        let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = normal.cross(&helper).normalize();
        let e2 = normal.cross(&e1);
        let foot = normal * plane.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(-4.0..4.0);
                let t: f64 = rng.random_range(-4.0..4.0);
                foot + e1 * s + e2 * t
            })
            .collect()
    }

    #[test]
    fn recovers_table3_plane_exactly() {
        let truth = Plane::from_coefficients(0.066, 0.914, 0.4, 1.188).unwrap();
        let cloud = PointCloud::new(plane_points(&truth, 500, 3));
        let fit = fit_plane_ransac(&cloud, 1e-6, 50, 11).unwrap();
        for (got, want) in [
            (fit.plane.a, truth.a),
            (fit.plane.b, truth.b),
            (fit.plane.c, truth.c),
            (fit.plane.d, truth.d),
        ] {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert_eq!(fit.inlier_count, 500);
    }

    #[test]
    fn robust_to_outliers() {
        let truth = Plane::from_coefficients(0.0, 1.0, 0.0, -1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = plane_points(&truth, 700, 9);
        let inlier_set = pts.clone();
        for _ in 0..300 {
            pts.push(Vec3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-3.0..1.0),
                rng.random_range(1.0..9.0),
            ));
        }
        let fit = fit_plane_ransac(&PointCloud::new(pts), 0.01, 200, 1).unwrap();
        // Oracle: least squares on the known inlier set.
        let (oracle, _) = fit_plane_lsq(&inlier_set).unwrap();
        let angle = fit.plane.normal().angle(&oracle.normal()).to_degrees();
        assert!(angle < 0.5, "normal error {angle} deg");
        assert!((fit.plane.d - oracle.d).abs() < 1e-3);
    }

    #[test]
    fn collinear_points_fail() {
        let cloud = PointCloud::new(vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 2.0),
            Vec3::new(2.0, 2.0, 3.0),
        ]);
        assert!(matches!(
            fit_plane_ransac(&cloud, 0.01, 20, 0),
            Err(Error::Estimation(_))
        ));
        assert!(fit_plane_ransac(&PointCloud::new(vec![Vec3::zeros(); 2]), 0.1, 5, 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let truth = Plane::from_coefficients(0.1, 0.9, 0.3, -1.0).unwrap();
        let mut pts = plane_points(&truth, 300, 1);
        pts.extend(plane_points(
            &Plane::from_coefficients(1.0, 0.2, 0.0, 2.0).unwrap(),
            100,
            2,
        ));
        let cloud = PointCloud::new(pts);
        let a = fit_plane_ransac(&cloud, 0.02, 100, 42).unwrap();
        let b = fit_plane_ransac(&cloud, 0.02, 100, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plane.d.to_bits(), b.plane.d.to_bits());
    }

    #[test]
    fn median_tolerance() {
        let cloud = PointCloud::new(
            [1.0, 2.0, 10.0, 4.0, 3.0]
                .iter()
                .map(|&z| Vec3::new(0.0, 0.0, z))
                .collect(),
        );
        assert!((RansacParams::default().tolerance_for(&cloud) - 0.06).abs() < 1e-12);
    }
}
