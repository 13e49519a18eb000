use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

/// Allowed deviation of a stored rotation quaternion from unit norm.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

/// A single anisotropic 3D Gaussian primitive.
///
/// `rotation` is stored as given (not renormalised) so that files round-trip
/// exactly; math that needs a rotation matrix normalises on the fly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vector3<f64>,
    /// Per-axis standard deviations in world units.
    pub scale: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
}

impl Gaussian {
    pub fn max_scale(&self) -> f64 {
        self.scale.max()
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        UnitQuaternion::from_quaternion(self.rotation)
            .to_rotation_matrix()
            .into_inner()
    }

    /// World-space covariance `R S Sᵀ Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.rotation_matrix() * Matrix3::from_diagonal(&self.scale);
        m * m.transpose()
    }

    /// Checks the value-range invariants, returning a description of the
    /// first violation.
    pub fn check(&self) -> Result<(), String> {
        let finite = self.mean.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.color.iter().all(|v| v.is_finite());
        if !finite {
            return Err("non-finite attribute".into());
        }
        if let Some(s) = self.scale.iter().find(|s| **s <= 0.0) {
            return Err(format!("scale component {s} is not positive"));
        }
        let norm = self.rotation.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
            return Err(format!("rotation quaternion norm {norm} is not 1"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {} outside [0,1]", self.opacity));
        }
        if let Some(c) = self.color.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(format!("color channel {c} outside [0,1]"));
        }
        Ok(())
    }
}

/// Axis-aligned bounding box in world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    /// Box enclosing the 3σ ellipsoid of `g`.
    ///
    /// Bounds are rounded outward onto the `f32` grid so that the box is
    /// stored losslessly in the 32-bit streaming layout and every consumer
    /// (reference search, subtree traversal, simulator) tests the same box.
    pub fn enclosing(g: &Gaussian) -> Self {
        let rot = g.rotation_matrix();
        let mut min = Vector3::zeros();
        let mut max = Vector3::zeros();
        for axis in 0..3 {
            let half = 3.0
                * (0..3)
                    .map(|j| (rot[(axis, j)] * g.scale[j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
            min[axis] = round_down_f32(g.mean[axis] - half);
            max[axis] = round_up_f32(g.mean[axis] + half);
        }
        Self { min, max }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && other.max[i] <= self.max[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (lo, hi) = (self.min, self.max);
        std::array::from_fn(|i| {
            Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

/// Largest `f32`-representable value not above `v`.
pub fn round_down_f32(v: f64) -> f64 {
    let r = v as f32;
    if (r as f64) > v {
        r.next_down() as f64
    } else {
        r as f64
    }
}

/// Smallest `f32`-representable value not below `v`.
pub fn round_up_f32(v: f64) -> f64 {
    let r = v as f32;
    if (r as f64) < v {
        r.next_up() as f64
    } else {
        r as f64
    }
}
