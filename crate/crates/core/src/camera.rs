//! Pinhole camera with polynomial radial distortion.
//!
//! A world point `w` is mapped to a pixel by
//!
//! ```text
//! c      = R·w + t                  camera frame
//! (x, y) = (c.x / c.z, c.y / c.z)   normalized image plane
//! s      = 1 + k1·r² + k2·r⁴ + k3·r⁶,   r² = x² + y²
//! pixel  = K · (s·x, s·y, 1)
//! ```
//!
//! The distortion centre coincides with the principal point.

use nalgebra::{Matrix3, Point2, Point3, Vector3};

use crate::error::{Error, Result};

/// Pixel coordinates `(x', y')`.
pub type PixelPoint = Point2<f64>;
/// Coordinates on the normalized image plane (`z = 1`).
pub type NormalizedPoint = Point2<f64>;
/// Metric 3D coordinates.
pub type WorldPoint = Point3<f64>;

const UNDISTORT_MAX_ITERATIONS: usize = 50;
const UNDISTORT_TOLERANCE: f64 = 1e-12;

/// Linear intrinsic parameters of a pinhole camera, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("intrinsics must be finite"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    /// The upper-triangular intrinsic matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn to_pixel(&self, p: &NormalizedPoint) -> PixelPoint {
        PixelPoint::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }

    pub fn to_normalized(&self, p: &PixelPoint) -> NormalizedPoint {
        NormalizedPoint::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }
}

/// Convenience wrapper for [`CameraIntrinsics::matrix`].
pub fn intrinsics_matrix(intr: &CameraIntrinsics) -> Matrix3<f64> {
    intr.matrix()
}

/// Radial lens distortion `1 + k1·r² + k2·r⁴ + k3·r⁶`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RadialDistortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl RadialDistortion {
    pub const NONE: RadialDistortion = RadialDistortion {
        k1: 0.0,
        k2: 0.0,
        k3: 0.0,
    };

    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        if !(k1.is_finite() && k2.is_finite() && k3.is_finite()) {
            return Err(Error::invalid("distortion coefficients must be finite"));
        }
        Ok(Self { k1, k2, k3 })
    }

    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0
    }

    /// Radial scale factor for a squared radius `r2`.
    pub fn scale(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    /// Derivative of [`scale`](Self::scale) with respect to `r2`.
    pub fn scale_derivative(&self, r2: f64) -> f64 {
        self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3)
    }

    pub fn apply(&self, p: &NormalizedPoint) -> NormalizedPoint {
        let s = self.scale(p.x * p.x + p.y * p.y);
        NormalizedPoint::new(p.x * s, p.y * s)
    }

    /// Inverts [`apply`](Self::apply).
    ///
    /// The distorted radius `ρ = r·s(r²)` is a scalar function of the ideal
    /// radius, so the inverse is found by Newton iteration on `r` and the
    /// direction is kept. Fails when the radial map is not monotone at the
    /// requested radius or the iteration does not settle.
    pub fn undistort(&self, p: &NormalizedPoint) -> Result<NormalizedPoint> {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        if rho == 0.0 || self.is_identity() {
            return Ok(*p);
        }
        let mut r = rho;
        for _ in 0..UNDISTORT_MAX_ITERATIONS {
            let r2 = r * r;
            let f = r * self.scale(r2) - rho;
            // d/dr [r·s(r²)] = s + 2r²·s'
            let df = self.scale(r2) + 2.0 * r2 * self.scale_derivative(r2);
            if !(df > 0.0) || !f.is_finite() {
                break;
            }
            let step = f / df;
            r -= step;
            if step.abs() <= UNDISTORT_TOLERANCE * r.abs().max(1.0) {
                let ratio = r / rho;
                let out = NormalizedPoint::new(p.x * ratio, p.y * ratio);
                let back = self.apply(&out);
                if (back.x - p.x).abs() <= 1e-9 && (back.y - p.y).abs() <= 1e-9 {
                    return Ok(out);
                }
                break;
            }
        }
        Err(Error::NonConvergence {
            what: "distortion inversion",
            iterations: UNDISTORT_MAX_ITERATIONS,
        })
    }
}

pub fn apply_distortion(p: &NormalizedPoint, d: &RadialDistortion) -> NormalizedPoint {
    d.apply(p)
}

pub fn undistort(p: &NormalizedPoint, d: &RadialDistortion) -> Result<NormalizedPoint> {
    d.undistort(p)
}

/// A rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidExtrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidExtrinsics {
    const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("extrinsics must be finite"));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > Self::ORTHONORMAL_TOLERANCE {
            return Err(Error::invalid("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > Self::ORTHONORMAL_TOLERANCE {
            return Err(Error::invalid("rotation must have determinant +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &RigidExtrinsics) -> Self {
        Self {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }
}

/// Projects a world point to pixels through extrinsics, distortion and `K`.
pub fn project(
    w: &WorldPoint,
    intr: &CameraIntrinsics,
    d: &RadialDistortion,
    ext: &RigidExtrinsics,
) -> Result<PixelPoint> {
    let c = ext.transform_point(w);
    if !(c.z > 0.0) {
        return Err(Error::BehindCamera { depth: c.z });
    }
    let n = NormalizedPoint::new(c.x / c.z, c.y / c.z);
    Ok(intr.to_pixel(&d.apply(&n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rot_z(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn intrinsics_matrix_layout() {
        let unit = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(intrinsics_matrix(&unit), Matrix3::identity());

        let k = CameraIntrinsics::new(100.0, 200.0, 50.0, 60.0).unwrap();
        assert_eq!(
            k.matrix(),
            Matrix3::new(100.0, 0.0, 50.0, 0.0, 200.0, 60.0, 0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn zero_focal_length_rejected() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -2.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn distortion_examples() {
        let none = RadialDistortion::NONE;
        assert_eq!(
            apply_distortion(&NormalizedPoint::new(0.3, 0.4), &none),
            NormalizedPoint::new(0.3, 0.4)
        );
        let d = RadialDistortion::new(0.3, -0.2, 0.1).unwrap();
        assert_eq!(d.apply(&NormalizedPoint::origin()), NormalizedPoint::origin());

        let d = RadialDistortion::new(0.1, 0.0, 0.0).unwrap();
        let p = d.apply(&NormalizedPoint::new(1.0, 0.0));
        assert_relative_eq!(p.x, 1.1, epsilon = 1e-15);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn undistort_examples() {
        let p = NormalizedPoint::new(0.5, 0.5);
        assert_eq!(undistort(&p, &RadialDistortion::NONE).unwrap(), p);

        let d = RadialDistortion::new(0.05, 0.01, 0.0).unwrap();
        let ideal = NormalizedPoint::new(0.2, -0.1);
        let back = d.undistort(&d.apply(&ideal)).unwrap();
        assert!((back - ideal).amax() < 1e-9);

        assert_eq!(
            d.undistort(&NormalizedPoint::origin()).unwrap(),
            NormalizedPoint::origin()
        );
    }

    #[test]
    fn undistort_rejects_folded_lens() {
        // s(r²)·r peaks near r ≈ 0.58 for k1 = -1; beyond that radius there is no preimage.
        let d = RadialDistortion::new(-1.0, 0.0, 0.0).unwrap();
        assert!(d.undistort(&NormalizedPoint::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn project_examples() {
        let unit = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let id = RigidExtrinsics::identity();
        let none = RadialDistortion::NONE;
        let p = project(&WorldPoint::new(0.0, 0.0, 1.0), &unit, &none, &id).unwrap();
        assert_eq!(p, PixelPoint::new(0.0, 0.0));

        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let p = project(&WorldPoint::new(1.0, 1.0, 2.0), &k, &none, &id).unwrap();
        assert_eq!(p, PixelPoint::new(100.0, 100.0));

        assert!(matches!(
            project(&WorldPoint::new(0.0, 0.0, -1.0), &k, &none, &id),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn extrinsics_validation() {
        assert!(RigidExtrinsics::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidExtrinsics::new(reflection, Vector3::zeros()).is_err());
        assert!(RigidExtrinsics::new(rot_z(0.3), Vector3::new(1.0, 2.0, 3.0)).is_ok());
    }

    proptest! {
        #[test]
        fn undistort_inverts_distortion(
            r in 0.0f64..=1.0,
            theta in -3.2f64..3.2,
            k1 in -0.2f64..=0.2,
            k2 in -0.05f64..=0.05,
            k3 in -0.01f64..=0.01,
        ) {
            let d = RadialDistortion::new(k1, k2, k3).unwrap();
            let ideal = NormalizedPoint::new(r * theta.cos(), r * theta.sin());
            let back = d.undistort(&d.apply(&ideal)).unwrap();
            prop_assert!((back - ideal).amax() < 1e-9);
        }

        #[test]
        fn undistorted_point_redistorts_to_target(
            x in -0.5f64..0.5, y in -0.5f64..0.5, k1 in -0.2f64..=0.2,
        ) {
            let d = RadialDistortion::new(k1, 0.01, -0.005).unwrap();
            let target = NormalizedPoint::new(x, y);
            let ideal = d.undistort(&target).unwrap();
            prop_assert!((d.apply(&ideal) - target).amax() < 1e-9);
        }

        #[test]
        fn projection_is_equivariant_under_extrinsics(
            wx in -2.0f64..2.0, wy in -2.0f64..2.0, wz in 3.0f64..8.0,
            yaw in -0.5f64..0.5, tx in -0.5f64..0.5, ty in -0.5f64..0.5,
        ) {
            let k = CameraIntrinsics::new(800.0, 780.0, 320.0, 240.0).unwrap();
            let d = RadialDistortion::new(-0.1, 0.02, 0.0).unwrap();
            let ext = RigidExtrinsics::new(rot_z(yaw), Vector3::new(tx, ty, 0.2)).unwrap();
            let w = WorldPoint::new(wx, wy, wz);
            let direct = project(&w, &k, &d, &ext).unwrap();
            let moved = project(&ext.transform_point(&w), &k, &d, &RigidExtrinsics::identity()).unwrap();
            prop_assert!((direct - moved).amax() < 1e-9);
        }

        #[test]
        fn undistorted_projection_is_linear_pinhole(
            wx in -2.0f64..2.0, wy in -2.0f64..2.0, wz in 1.0f64..8.0,
        ) {
            let k = CameraIntrinsics::new(640.0, 600.0, 320.0, 240.0).unwrap();
            let w = WorldPoint::new(wx, wy, wz);
            let p = project(&w, &k, &RadialDistortion::NONE, &RigidExtrinsics::identity()).unwrap();
            let h = k.matrix() * w.coords;
            prop_assert_eq!(p.x, 640.0 * (wx / wz) + 320.0);
            prop_assert!((p.x - h.x / h.z).abs() < 1e-9 && (p.y - h.y / h.z).abs() < 1e-9);
        }
    }
}
