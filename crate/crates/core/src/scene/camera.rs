use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::gaussian::{Aabb, Gaussian};
use crate::error::{Error, Result};

/// Pinhole camera. Camera space is x right, y down, z forward; the principal
/// point sits at the image centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vector3<f64>,
    /// World-to-camera rotation.
    pub orientation: Quaternion<f64>,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrustumTest {
    Outside,
    Visible,
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` hinting the world up
    /// direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let m = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        Self {
            position: eye,
            orientation: *q.quaternion(),
            focal,
            width,
            height,
            near,
            far,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.focal.is_finite()
            && self.near.is_finite()
            && self.far.is_finite();
        if !finite {
            return Err(Error::Scene("camera has non-finite fields".into()));
        }
        if self.focal <= 0.0 {
            return Err(Error::Scene(format!("camera focal {} must be > 0", self.focal)));
        }
        if !(0.0 < self.near && self.near < self.far) {
            return Err(Error::Scene(format!(
                "camera needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Scene("camera image size must be at least 1x1".into()));
        }
        let norm = self.orientation.norm();
        if (norm - 1.0).abs() > super::gaussian::QUAT_NORM_TOLERANCE {
            return Err(Error::Scene(format!("camera orientation norm {norm} is not 1")));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        UnitQuaternion::from_quaternion(self.orientation)
            .to_rotation_matrix()
            .into_inner()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * (p - self.position)
    }

    /// Half-extents of the image plane at unit depth.
    fn tan_half(&self) -> (f64, f64) {
        (
            0.5 * self.width as f64 / self.focal,
            0.5 * self.height as f64 / self.focal,
        )
    }
}

/// Conservative view-frustum test: `Outside` only when all eight box corners
/// lie strictly outside one of the six frustum planes.
pub fn frustum_test(aabb: &Aabb, camera: &Camera) -> FrustumTest {
    let rot = camera.rotation_matrix();
    let corners = aabb.corners().map(|c| rot * (c - camera.position));
    let (tx, ty) = camera.tan_half();
    type Plane<'a> = &'a dyn Fn(&Vector3<f64>) -> f64;
    let planes: [Plane; 6] = [
        &|p| p.z - camera.near,
        &|p| camera.far - p.z,
        &|p| p.x + p.z * tx,
        &|p| p.z * tx - p.x,
        &|p| p.y + p.z * ty,
        &|p| p.z * ty - p.y,
    ];
    for plane in planes {
        if corners.iter().all(|c| plane(c) < 0.0) {
            return FrustumTest::Outside;
        }
    }
    FrustumTest::Visible
}

/// Pinhole-projected 3σ diameter of `g` in pixels.
///
/// Depth is clamped to the near plane. A Gaussian whose centre sits at or
/// behind the camera while its box still touches the frustum reports
/// `f64::INFINITY`, which always forces refinement.
pub fn projected_size(g: &Gaussian, aabb: &Aabb, camera: &Camera) -> f64 {
    let depth = camera.to_camera(&g.mean).z;
    if depth <= 0.0 && frustum_test(aabb, camera) == FrustumTest::Visible {
        return f64::INFINITY;
    }
    camera.focal * 6.0 * g.max_scale() / depth.max(camera.near)
}
