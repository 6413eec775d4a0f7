use nalgebra::Matrix3;

use super::{fit_plane_lsq, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Proper rotation (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Max deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation taking unit vector `from` onto unit vector `to`, by Rodrigues'
/// formula about `from × to`.
pub fn rodrigues_align(from: &Vec3, to: &Vec3) -> Result<Rotation3> {
    for (name, v) in [("from", from), ("to", to)] {
        if !((v.norm() - 1.0).abs() <= 1e-6) {
            return Err(Error::Parameter(format!(
                "`{name}` must be a unit vector, norm = {}",
                v.norm()
            )));
        }
    }
    let axis = from.cross(to);
    let sin = axis.norm();
    let cos = from.dot(to);
    if sin < 1e-12 {
        if cos > 0.0 {
            return Ok(Rotation3::identity());
        }
        // Half turn about any axis perpendicular to `from`: R = 2uuᵀ − I.
        let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = from.cross(&helper).normalize();
        return Ok(Rotation3(2.0 * u * u.transpose() - Matrix3::identity()));
    }
    let k = skew(&(axis / sin));
    let angle = sin.atan2(cos);
    let r = Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * (k * k);
    Ok(Rotation3(r))
}

/// Surface normal of a damage crop: the least-variance direction of the
/// centred points, oriented towards the camera (`n · centroid < 0`).
pub fn damage_normal(cloud: &PointCloud) -> Result<Vec3> {
    let (plane, _) = fit_plane_lsq(&cloud.points)?;
    let centroid = cloud.centroid().expect("non-empty after fit");
    let n = plane.normal();
    Ok(if n.dot(&centroid) > 0.0 { -n } else { n })
}
