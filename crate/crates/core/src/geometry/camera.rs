//! Pinhole intrinsics, two-term radial distortion and the full forward
//! projection model.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{axis_angle_to_matrix, matrix_to_axis_angle, AxisAngle, RotationMatrix};
use crate::error::{CalibError, Result};

/// Iteration cap of the fixed-point undistortion.
pub const UNDISTORT_MAX_ITERATIONS: usize = 50;
/// Update size (pixels) at which undistortion stops.
pub const UNDISTORT_TOLERANCE_PX: f64 = 1e-8;

/// Focal lengths and principal point, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, u0: f64, v0: f64) -> Result<Self> {
        let k = Self { fx, fy, u0, v0 };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "focal lengths must be positive and finite (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if !(self.u0.is_finite() && self.v0.is_finite()) {
            return Err(CalibError::InvalidParameter(
                "principal point must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.u0, 0.0, self.fy, self.v0, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.u0 / self.fx,
            0.0,
            1.0 / self.fy,
            -self.v0 / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.u0, self.v0)
    }

    pub fn to_pixel(&self, n: NormalizedPoint) -> PixelPoint {
        PixelPoint::new(self.fx * n.x + self.u0, self.fy * n.y + self.v0)
    }
}

/// Radial coefficients; `(0, 0)` is the ideal pinhole.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoefficients {
    pub k1: f64,
    pub k2: f64,
}

impl DistortionCoefficients {
    pub const NONE: Self = Self { k1: 0.0, k2: 0.0 };

    pub fn new(k1: f64, k2: f64) -> Self {
        Self { k1, k2 }
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0
    }

    /// `k1 r^2 + k2 r^4` for squared radius `r2`.
    pub fn radial_factor(&self, r2: f64) -> f64 {
        r2 * (self.k1 + self.k2 * r2)
    }
}

/// Image position in pixels (column `u`, row `v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Point on the unit-depth image plane; the ray is `[x, y, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn ray(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

pub type Point3 = Vector3<f64>;

/// Rigid transform taking points into the camera frame: `X_cam = R X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRT {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl PoseRT {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_axis_angle(r: &AxisAngle, translation: Vector3<f64>) -> Self {
        Self::new(axis_angle_to_matrix(r), translation)
    }

    pub fn axis_angle(&self) -> Result<AxisAngle> {
        matrix_to_axis_angle(&self.rotation)
    }

    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotation.rotate(p) + self.translation
    }
}

/// Applies the radial polynomial to a normalized point.
pub fn distort_normalized(n: NormalizedPoint, d: &DistortionCoefficients) -> NormalizedPoint {
    let scale = 1.0 + d.radial_factor(n.x * n.x + n.y * n.y);
    NormalizedPoint::new(n.x * scale, n.y * scale)
}

/// Maps an ideal pixel to the observed (distorted) one. The radius is taken
/// from the ideal point: `observed = ideal + (ideal - pp) (k1 r^2 + k2 r^4)`.
pub fn distort(
    ideal: PixelPoint,
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> PixelPoint {
    let du = ideal.u - k.u0;
    let dv = ideal.v - k.v0;
    let x = du / k.fx;
    let y = dv / k.fy;
    let f = d.radial_factor(x * x + y * y);
    PixelPoint::new(ideal.u + du * f, ideal.v + dv * f)
}

/// Inverts [`distort`] by fixed-point iteration starting at the observation.
pub fn undistort(
    observed: PixelPoint,
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> Result<PixelPoint> {
    if d.is_zero() {
        return Ok(observed);
    }
    let mut ideal = observed;
    let mut step = f64::INFINITY;
    for _ in 0..UNDISTORT_MAX_ITERATIONS {
        let du = ideal.u - k.u0;
        let dv = ideal.v - k.v0;
        let x = du / k.fx;
        let y = dv / k.fy;
        let f = d.radial_factor(x * x + y * y);
        let next = PixelPoint::new(observed.u - du * f, observed.v - dv * f);
        step = next.distance(&ideal);
        ideal = next;
        if step < UNDISTORT_TOLERANCE_PX {
            return Ok(ideal);
        }
        if !step.is_finite() {
            break;
        }
    }
    Err(CalibError::NonConvergence {
        iterations: UNDISTORT_MAX_ITERATIONS,
        last_step_px: step,
    })
}

/// Inverse-intrinsics mapping of an (already undistorted) pixel.
pub fn pixel_to_ray(p: PixelPoint, k: &CameraIntrinsics) -> NormalizedPoint {
    NormalizedPoint::new((p.u - k.u0) / k.fx, (p.v - k.v0) / k.fy)
}

/// Full forward model: rigid transform, perspective divide, distortion, intrinsics.
pub fn project(
    p: &Point3,
    pose: &PoseRT,
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> Result<PixelPoint> {
    let pc = pose.transform(p);
    if pc.z <= 0.0 {
        return Err(CalibError::BehindCamera { depth: pc.z });
    }
    let n = NormalizedPoint::new(pc.x / pc.z, pc.y / pc.z);
    Ok(k.to_pixel(distort_normalized(n, d)))
}

/// Intrinsics and distortion of one physical camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoefficients,
}

impl CameraModel {
    pub fn new(intrinsics: CameraIntrinsics, distortion: DistortionCoefficients) -> Self {
        Self {
            intrinsics,
            distortion,
        }
    }

    pub fn project(&self, p: &Point3, pose: &PoseRT) -> Result<PixelPoint> {
        project(p, pose, &self.intrinsics, &self.distortion)
    }
}

/// Sensor size in pixels; valid pixel coordinates lie in `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFrame {
    pub width: u32,
    pub height: u32,
}

impl ImageFrame {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CalibError::InvalidParameter(format!(
                "frame must be non-empty (got {width}x{height})"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(f64::from(self.width) / 2.0, f64::from(self.height) / 2.0)
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        (0.0..=f64::from(self.width)).contains(&p.u) && (0.0..=f64::from(self.height)).contains(&p.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample_lens() -> (CameraIntrinsics, DistortionCoefficients) {
        (
            CameraIntrinsics::new(2679.5, 2678.9, 625.40, 514.64).unwrap(),
            DistortionCoefficients::new(-0.2553, 1.5709),
        )
    }

    /// Scalar re-derivation, kept free of the helpers above.
    fn scalar_distort(u: f64, v: f64, k: &CameraIntrinsics, d: &DistortionCoefficients) -> (f64, f64) {
        let x = (u - k.u0) / k.fx;
        let y = (v - k.v0) / k.fy;
        let r2 = x * x + y * y;
        let s = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
        (k.fx * x * s + k.u0, k.fy * y * s + k.v0)
    }

    #[test]
    fn principal_point_is_fixed() {
        let (k, d) = sample_lens();
        let p = distort(k.principal_point(), &k, &d);
        assert_eq!(p, k.principal_point());
        assert_eq!(undistort(k.principal_point(), &k, &d).unwrap(), k.principal_point());
    }

    #[test]
    fn zero_distortion_is_identity() {
        let (k, _) = sample_lens();
        let p = PixelPoint::new(17.25, 1003.5);
        assert_eq!(distort(p, &k, &DistortionCoefficients::NONE), p);
        assert_eq!(undistort(p, &k, &DistortionCoefficients::NONE).unwrap(), p);
    }

    #[test]
    fn distort_matches_opencv_and_scalar_oracle() {
        let (k, d) = sample_lens();
        let p = distort(PixelPoint::new(1000.0, 700.0), &k, &d);
        // cv2.projectPoints with distCoeffs (k1, k2, 0, 0)
        assert_abs_diff_eq!(p.u, 998.0213769464067, epsilon = 1e-9);
        assert_abs_diff_eq!(p.v, 699.020935479941, epsilon = 1e-9);
        let (u, v) = scalar_distort(1000.0, 700.0, &k, &d);
        assert_abs_diff_eq!(p.u, u, epsilon = 1e-9);
        assert_abs_diff_eq!(p.v, v, epsilon = 1e-9);
    }

    #[test]
    fn undistort_round_trip() {
        let (k, d) = sample_lens();
        for &(u, v) in &[(0.0, 0.0), (1279.0, 1023.0), (640.0, 3.0), (311.5, 902.25)] {
            let ideal = PixelPoint::new(u, v);
            let back = undistort(distort(ideal, &k, &d), &k, &d).unwrap();
            assert!(back.distance(&ideal) < 1e-6);
        }
    }

    #[test]
    fn undistort_reports_non_convergence() {
        let k = CameraIntrinsics::new(100.0, 100.0, 0.0, 0.0).unwrap();
        let d = DistortionCoefficients::new(5.0, 5.0);
        let err = undistort(PixelPoint::new(500.0, 500.0), &k, &d).unwrap_err();
        assert!(matches!(err, CalibError::NonConvergence { .. }));
    }

    #[test]
    fn pixel_to_ray_examples() {
        let k = CameraIntrinsics::new(5968.0, 5967.9, 1227.0, 1014.4).unwrap();
        let n = pixel_to_ray(k.principal_point(), &k);
        assert_eq!((n.x, n.y), (0.0, 0.0));
        let n = pixel_to_ray(PixelPoint::new(k.u0 + k.fx, k.v0), &k);
        assert_eq!((n.x, n.y), (1.0, 0.0));
        let n = pixel_to_ray(PixelPoint::new(2000.0, 1014.4), &k);
        assert_abs_diff_eq!(n.x, 0.12952412868632707, epsilon = 1e-16);
        assert_eq!(n.y, 0.0);
    }

    #[test]
    fn project_on_axis_and_scale_invariance() {
        let (k, _) = sample_lens();
        let id = PoseRT::identity();
        let none = DistortionCoefficients::NONE;
        let p = project(&Vector3::new(0.0, 0.0, 100.0), &id, &k, &none).unwrap();
        assert_eq!(p, k.principal_point());
        let (x, y) = (0.12, -0.07);
        let a = project(&Vector3::new(x, y, 1.0), &id, &k, &none).unwrap();
        for z in [0.5, 3.0, 750.0] {
            let b = project(&Vector3::new(z * x, z * y, z), &id, &k, &none).unwrap();
            assert!(a.distance(&b) < 1e-10);
        }
    }

    #[test]
    fn project_matches_opencv() {
        let (k, d) = sample_lens();
        let axis = Vector3::new(1.0, 2.0, 3.0) / 14f64.sqrt();
        let pose = PoseRT::from_axis_angle(
            &AxisAngle(axis * 5f64.to_radians()),
            Vector3::new(0.1, -0.05, 2.0),
        );
        // cv2.projectPoints(pts, rvec, tvec, K, (k1, k2, 0, 0))
        let cases = [
            ([0.3, -0.2, 1.5], [996.0675823836547, 314.89849017946074]),
            ([-0.25, 0.1, 0.5], [484.39698168534073, 537.318080385015]),
            ([0.0, 0.0, 3.0], [755.2104989189417, 453.02624009969]),
        ];
        for (p, expected) in cases {
            let px = project(&Vector3::from(p), &pose, &k, &d).unwrap();
            assert_abs_diff_eq!(px.u, expected[0], epsilon = 1e-8);
            assert_abs_diff_eq!(px.v, expected[1], epsilon = 1e-8);
        }
    }

    #[test]
    fn project_rejects_points_behind() {
        let (k, d) = sample_lens();
        let err = project(&Vector3::new(0.0, 0.0, -1.0), &PoseRT::identity(), &k, &d);
        assert!(matches!(err, Err(CalibError::BehindCamera { .. })));
        let err = project(&Vector3::new(1.0, 0.0, 0.0), &PoseRT::identity(), &k, &d);
        assert!(matches!(err, Err(CalibError::BehindCamera { .. })));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
        let k = CameraIntrinsics::new(800.0, 780.0, 320.0, 240.0).unwrap();
        assert_abs_diff_eq!(k.matrix() * k.inverse_matrix(), Matrix3::identity(), epsilon = 1e-15);
    }
}
