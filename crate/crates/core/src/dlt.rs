//! Closed-form single-image calibration.
//!
//! The 3x4 projection matrix is solved from 2-D/3-D correspondences as the
//! inhomogeneous 11-unknown system obtained by fixing the last entry, then
//! decomposed into intrinsics and pose using the orthonormality of the
//! rotation rows. Radial distortion is initialized afterwards by linear
//! least squares over all points.
//!
//! Both point sets are centroid-shifted and isotropically scaled before the
//! solve. In normalized coordinates the fixed entry is the depth of the
//! point centroid, which stays well away from zero even when the camera
//! translation itself vanishes (the collimator case).

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector3};

use crate::error::{CalibError, Result};
use crate::geometry::{
    CameraIntrinsics, DistortionCoefficients, PixelPoint, Point3, PoseRT, RotationMatrix,
};

/// Smallest/largest singular value ratio below which a design matrix is degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-10;

/// Minimum number of correspondences for the 11-unknown system.
pub const MIN_DLT_POINTS: usize = 6;

/// An observed (distorted) pixel paired with a 3-D control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub id: u32,
    pub pixel: PixelPoint,
    pub point: Point3,
}

/// Projection matrix `M = K [R | t]`, scaled so that `|(m8, m9, m10)| = 1`
/// and signed so the observed points have positive depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(pub Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn compose(k: &CameraIntrinsics, pose: &PoseRT) -> Self {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation.matrix());
        rt.set_column(3, &pose.translation);
        Self(k.matrix() * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    /// Entry `m_i` in row-major order.
    pub fn m(&self, i: usize) -> f64 {
        self.0[(i / 4, i % 4)]
    }

    pub fn depth(&self, p: &Point3) -> f64 {
        self.m(8) * p.x + self.m(9) * p.y + self.m(10) * p.z + self.m(11)
    }

    pub fn project(&self, p: &Point3) -> PixelPoint {
        let h = self.0 * p.push(1.0);
        PixelPoint::new(h.x / h.z, h.y / h.z)
    }

    /// Residuals of the two linear equations per point after dividing by `m11`.
    pub fn normalized_system_residuals(&self, points: &[Correspondence]) -> DVector<f64> {
        let m11 = self.m(11);
        let s: Vec<f64> = (0..12).map(|i| self.m(i) / m11).collect();
        let mut out = DVector::zeros(points.len() * 2);
        for (i, c) in points.iter().enumerate() {
            let (x, y, z) = (c.point.x, c.point.y, c.point.z);
            let (u, v) = (c.pixel.u, c.pixel.v);
            out[2 * i] = x * s[0] + y * s[1] + z * s[2] + s[3] - u * x * s[8] - u * y * s[9] - u * z * s[10] - u;
            out[2 * i + 1] =
                x * s[4] + y * s[5] + z * s[6] + s[7] - v * x * s[8] - v * y * s[9] - v * z * s[10] - v;
        }
        out
    }

    /// Rescales to unit third-row rotation part, with positive depth for `points`.
    fn normalized_scale(m: Matrix3x4<f64>, points: &[Correspondence]) -> Result<Self> {
        let n = m.fixed_view::<1, 3>(2, 0).norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(CalibError::InvalidMatrix(
                "third row has zero rotation part".into(),
            ));
        }
        let mut scaled = Self(m / n);
        let mean_depth: f64 =
            points.iter().map(|c| scaled.depth(&c.point)).sum::<f64>() / points.len() as f64;
        if mean_depth < 0.0 {
            scaled.0 = -scaled.0;
        }
        Ok(scaled)
    }
}

/// Closed-form estimate before nonlinear refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCalibration {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoefficients,
    pub pose: PoseRT,
}

fn check_unique(points: &[Correspondence]) -> Result<()> {
    let mut ids: Vec<u32> = points.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    match ids.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(CalibError::DuplicateId(w[0])),
        None => Ok(()),
    }
}

fn similarity_3d(points: &[Correspondence]) -> Matrix4<f64> {
    let n = points.len() as f64;
    let c = points.iter().map(|p| p.point).sum::<Vector3<f64>>() / n;
    let mean_dist = points.iter().map(|p| (p.point - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { 3f64.sqrt() / mean_dist } else { 1.0 };
    Matrix4::new(
        s, 0.0, 0.0, -s * c.x, //
        0.0, s, 0.0, -s * c.y, //
        0.0, 0.0, s, -s * c.z, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Centroid/scale normalization of 2-D points (`mean distance = sqrt(2)`).
pub(crate) fn similarity_2d(points: impl Iterator<Item = (f64, f64)> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points.map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { 2f64.sqrt() / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Least-squares projection matrix from at least six non-coplanar points.
pub fn solve_projection_matrix(points: &[Correspondence]) -> Result<ProjectionMatrix> {
    if points.len() < MIN_DLT_POINTS {
        return Err(CalibError::InsufficientPoints {
            needed: MIN_DLT_POINTS,
            got: points.len(),
        });
    }
    check_unique(points)?;

    let t3 = similarity_3d(points);
    let t2 = similarity_2d(points.iter().map(|c| (c.pixel.u, c.pixel.v)));

    let n = points.len();
    let mut a = DMatrix::zeros(2 * n, 11);
    let mut b = DVector::zeros(2 * n);
    for (i, c) in points.iter().enumerate() {
        let p = t3 * c.point.push(1.0);
        let q = t2 * Vector3::new(c.pixel.u, c.pixel.v, 1.0);
        let (x, y, z) = (p.x, p.y, p.z);
        let (u, v) = (q.x, q.y);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u * z]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, x, y, z, 1.0, -v * x, -v * y, -v * z]);
        b[r] = u;
        b[r + 1] = v;
    }

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < DEGENERACY_RATIO {
        return Err(CalibError::DegenerateConfiguration(format!(
            "projection system is rank deficient (singular value ratio {:e})",
            if smax > 0.0 { smin / smax } else { 0.0 }
        )));
    }
    let s = svd
        .solve(&b, 0.0)
        .map_err(|e| CalibError::DegenerateConfiguration(e.to_string()))?;

    let mn = Matrix3x4::new(
        s[0], s[1], s[2], s[3], //
        s[4], s[5], s[6], s[7], //
        s[8], s[9], s[10], 1.0,
    );
    let t2_inv = t2
        .try_inverse()
        .ok_or_else(|| CalibError::DegenerateConfiguration("image points coincide".into()))?;
    let m = t2_inv * mn * t3;
    ProjectionMatrix::normalized_scale(m, points)
}

/// Intrinsics and pose from a scale-restored projection matrix. The raw
/// rotation rows are projected onto the nearest proper rotation.
pub fn decompose_projection(m: &ProjectionMatrix) -> Result<InitialCalibration> {
    let row = |r: usize| Vector3::new(m.0[(r, 0)], m.0[(r, 1)], m.0[(r, 2)]);
    let (m1, m2, m3) = (row(0), row(1), row(2));
    let scale = m3.norm();
    if !(scale > 0.0) {
        return Err(CalibError::InvalidMatrix("zero third row".into()));
    }
    // tolerate an unnormalized input by restoring the unit third row here
    let (m1, m2, m3) = (m1 / scale, m2 / scale, m3 / scale);
    let (m3_t, m7_t, m11) = (m.m(3) / scale, m.m(7) / scale, m.m(11) / scale);

    let u0 = m1.dot(&m3);
    let v0 = m2.dot(&m3);
    let fx = m1.cross(&m3).norm();
    let fy = m2.cross(&m3).norm();
    if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
        return Err(CalibError::InvalidMatrix(format!(
            "recovered focal lengths must be positive (fx = {fx}, fy = {fy})"
        )));
    }

    let r1 = (m1 - m3 * u0) / fx;
    let r2 = (m2 - m3 * v0) / fy;
    let raw = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), m3.transpose()]);
    let rotation = RotationMatrix::nearest(&raw)?;

    let tz = m11;
    let tx = (m3_t - u0 * tz) / fx;
    let ty = (m7_t - v0 * tz) / fy;

    Ok(InitialCalibration {
        intrinsics: CameraIntrinsics { fx, fy, u0, v0 },
        distortion: DistortionCoefficients::NONE,
        pose: PoseRT::new(rotation, Vector3::new(tx, ty, tz)),
    })
}

/// Fits `(k1, k2)` so that the pinhole projection of every point, pushed
/// through the radial polynomial, matches its observation.
pub fn estimate_initial_distortion(
    all: &[Correspondence],
    calib: &InitialCalibration,
) -> Result<DistortionCoefficients> {
    if all.len() < 2 {
        return Err(CalibError::InsufficientPoints {
            needed: 2,
            got: all.len(),
        });
    }
    let k = &calib.intrinsics;
    let mut a = DMatrix::zeros(2 * all.len(), 2);
    let mut b = DVector::zeros(2 * all.len());
    for (i, c) in all.iter().enumerate() {
        let pc = calib.pose.transform(&c.point);
        if pc.z <= 0.0 {
            return Err(CalibError::BehindCamera { depth: pc.z });
        }
        let (x, y) = (pc.x / pc.z, pc.y / pc.z);
        let r2 = x * x + y * y;
        let (du, dv) = (k.fx * x, k.fy * y);
        a[(2 * i, 0)] = du * r2;
        a[(2 * i, 1)] = du * r2 * r2;
        a[(2 * i + 1, 0)] = dv * r2;
        a[(2 * i + 1, 1)] = dv * r2 * r2;
        b[2 * i] = c.pixel.u - (du + k.u0);
        b[2 * i + 1] = c.pixel.v - (dv + k.v0);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < 1e-12 {
        return Err(CalibError::RankDeficient);
    }
    let sol = svd.solve(&b, 0.0).map_err(|_| CalibError::RankDeficient)?;
    Ok(DistortionCoefficients::new(sol[0], sol[1]))
}

/// Disc about the image centre inside which distortion is neglected for the
/// linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralRegion {
    pub center: PixelPoint,
    pub radius_px: f64,
}

/// Default fraction of the image half-diagonal that counts as central.
pub const DEFAULT_CENTRAL_FRACTION: f64 = 1.0 / 3.0;

impl CentralRegion {
    pub fn for_frame(width: u32, height: u32, fraction: f64) -> Self {
        let (w, h) = (f64::from(width), f64::from(height));
        Self {
            center: PixelPoint::new(w / 2.0, h / 2.0),
            radius_px: fraction * 0.5 * w.hypot(h),
        }
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.distance(&self.center) <= self.radius_px
    }

    /// `(central, edge)` partition preserving input order.
    pub fn split(&self, points: &[Correspondence]) -> (Vec<Correspondence>, Vec<Correspondence>) {
        points.iter().partition(|c| self.contains(&c.pixel))
    }
}

/// Linear solve on the central points, then distortion from all points.
pub fn calibrate_single_image(
    central: &[Correspondence],
    edge: &[Correspondence],
) -> Result<InitialCalibration> {
    let m = solve_projection_matrix(central)?;
    let mut calib = decompose_projection(&m)?;
    let all: Vec<Correspondence> = central.iter().chain(edge).copied().collect();
    check_unique(&all)?;
    calib.distortion = estimate_initial_distortion(&all, &calib)?;
    Ok(calib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle_to_matrix, project, AxisAngle};
    use approx::assert_relative_eq;

    fn pose() -> PoseRT {
        PoseRT::new(
            axis_angle_to_matrix(&AxisAngle::new(0.05, -0.03, 0.02)),
            Vector3::new(0.3, -0.2, 4.0),
        )
    }

    fn k_sample() -> CameraIntrinsics {
        CameraIntrinsics::new(7521.3, 7521.4, 1227.8, 1015.2).unwrap()
    }

    fn cloud(n: usize) -> Vec<Point3> {
        // deterministic, well spread, non-coplanar
        (0..n)
            .map(|i| {
                let f = i as f64;
                Point3::new(
                    (f * 0.7).sin() * 0.8,
                    (f * 1.3).cos() * 0.6,
                    2.0 + (f * 0.37).sin().abs() * 3.0,
                )
            })
            .collect()
    }

    fn observe(k: &CameraIntrinsics, pose: &PoseRT, d: &DistortionCoefficients, pts: &[Point3]) -> Vec<Correspondence> {
        pts.iter()
            .enumerate()
            .map(|(i, p)| Correspondence {
                id: i as u32,
                pixel: project(p, pose, k, d).unwrap(),
                point: *p,
            })
            .collect()
    }

    #[test]
    fn six_points_fit_exactly() {
        let k = k_sample();
        let obs = observe(&k, &pose(), &DistortionCoefficients::NONE, &cloud(6));
        let m = solve_projection_matrix(&obs).unwrap();
        let res = m.normalized_system_residuals(&obs);
        assert!(res.amax() < 1e-9, "residual {}", res.amax());
        assert!(m.m(11) > 0.0);
        let n = Vector3::new(m.m(8), m.m(9), m.m(10)).norm();
        assert_relative_eq!(n, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fifty_points_proportional_to_truth() {
        let k = k_sample();
        let p = pose();
        let obs = observe(&k, &p, &DistortionCoefficients::NONE, &cloud(50));
        let m = solve_projection_matrix(&obs).unwrap();
        let truth = ProjectionMatrix::compose(&k, &p);
        // truth already has a unit third rotation row
        let rel = (m.0 - truth.0).norm() / truth.0.norm();
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let k = k_sample();
        let pts: Vec<Point3> = (0..20)
            .map(|i| Point3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1, 3.0))
            .collect();
        let obs = observe(&k, &pose(), &DistortionCoefficients::NONE, &pts);
        assert!(matches!(
            solve_projection_matrix(&obs),
            Err(CalibError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let k = k_sample();
        let obs = observe(&k, &pose(), &DistortionCoefficients::NONE, &cloud(5));
        assert!(matches!(
            solve_projection_matrix(&obs),
            Err(CalibError::InsufficientPoints { needed: 6, got: 5 })
        ));
    }

    #[test]
    fn decompose_compose_round_trip() {
        let k = k_sample();
        let p = pose();
        let c = decompose_projection(&ProjectionMatrix::compose(&k, &p)).unwrap();
        assert_relative_eq!(c.intrinsics.fx, k.fx, max_relative = 1e-9);
        assert_relative_eq!(c.intrinsics.fy, k.fy, max_relative = 1e-9);
        assert_relative_eq!(c.intrinsics.u0, k.u0, max_relative = 1e-9);
        assert_relative_eq!(c.intrinsics.v0, k.v0, max_relative = 1e-9);
        assert!(c.pose.rotation.angle_to(&p.rotation) < 1e-9);
        assert!((c.pose.translation - p.translation).norm() < 1e-9);
    }

    #[test]
    fn identity_pose_decomposes_exactly() {
        let k = CameraIntrinsics::new(1000.0, 1100.0, 320.0, 240.0).unwrap();
        let p = PoseRT::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, 1.0));
        let c = decompose_projection(&ProjectionMatrix::compose(&k, &p)).unwrap();
        assert_eq!(*c.pose.rotation.matrix(), Matrix3::identity());
        assert_eq!(c.pose.translation, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(c.intrinsics, k);
    }

    #[test]
    fn sign_flip_gives_same_decomposition() {
        let k = k_sample();
        let obs = observe(&k, &pose(), &DistortionCoefficients::NONE, &cloud(12));
        let m = solve_projection_matrix(&obs).unwrap();
        let flipped = ProjectionMatrix::normalized_scale(-m.0, &obs).unwrap();
        assert_eq!(flipped, m);
        let a = decompose_projection(&m).unwrap();
        let b = decompose_projection(&flipped).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_matrix_is_rejected() {
        let mut m = Matrix3x4::zeros();
        m[(2, 2)] = 1.0;
        m[(0, 2)] = 3.0; // first row parallel to third
        assert!(matches!(
            decompose_projection(&ProjectionMatrix(m)),
            Err(CalibError::InvalidMatrix(_))
        ));
    }

    #[test]
    fn zero_distortion_recovered_as_zero() {
        let k = k_sample();
        let p = pose();
        let obs = observe(&k, &p, &DistortionCoefficients::NONE, &cloud(30));
        let calib = InitialCalibration {
            intrinsics: k,
            distortion: DistortionCoefficients::NONE,
            pose: p,
        };
        let d = estimate_initial_distortion(&obs, &calib).unwrap();
        assert!(d.k1.abs() < 1e-9 && d.k2.abs() < 1e-9, "{d:?}");
    }

    #[test]
    fn device_distortion_recovered() {
        let k = CameraIntrinsics::new(2677.9, 2678.5, 634.66, 524.12).unwrap();
        let d_true = DistortionCoefficients::new(-0.2011, 0.1989);
        let p = PoseRT::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, 0.0));
        let pts: Vec<Point3> = (0..49)
            .map(|i| {
                let (r, c) = ((i / 7) as f64 - 3.0, (i % 7) as f64 - 3.0);
                Point3::new(c * 0.07, r * 0.06, 1.0) * (100.0 + 10.0 * i as f64)
            })
            .collect();
        let obs = observe(&k, &p, &d_true, &pts);
        let calib = InitialCalibration {
            intrinsics: k,
            distortion: DistortionCoefficients::NONE,
            pose: p,
        };
        let d = estimate_initial_distortion(&obs, &calib).unwrap();
        assert!((d.k1 - d_true.k1).abs() < 1e-6);
        assert!((d.k2 - d_true.k2).abs() < 1e-6);
    }

    #[test]
    fn distortion_needs_distinct_radii() {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 500.0, 500.0).unwrap();
        let calib = InitialCalibration {
            intrinsics: k,
            distortion: DistortionCoefficients::NONE,
            pose: PoseRT::identity(),
        };
        // four points on one circle of radius 0.2
        let mk = |id, x: f64, y: f64| Correspondence {
            id,
            pixel: PixelPoint::new(500.0 + 1000.0 * x * 1.01, 500.0 + 1000.0 * y * 1.01),
            point: Point3::new(x, y, 1.0),
        };
        let same = [mk(0, 0.2, 0.0), mk(1, 0.0, 0.2), mk(2, -0.2, 0.0), mk(3, 0.0, -0.2)];
        assert!(matches!(
            estimate_initial_distortion(&same, &calib),
            Err(CalibError::RankDeficient)
        ));

        // two distinct radii: the 2x2 system is interpolated exactly
        let d_true = DistortionCoefficients::new(0.3, -0.5);
        let pts = [Point3::new(0.1, 0.0, 1.0), Point3::new(0.0, 0.3, 1.0)];
        let obs = observe(&k, &PoseRT::identity(), &d_true, &pts);
        let d = estimate_initial_distortion(&obs, &calib).unwrap();
        assert!((d.k1 - 0.3).abs() < 1e-9 && (d.k2 + 0.5).abs() < 1e-9, "{d:?}");
    }

    #[test]
    fn central_region_split() {
        let region = CentralRegion::for_frame(1280, 1024, DEFAULT_CENTRAL_FRACTION);
        assert_eq!(region.center, PixelPoint::new(640.0, 512.0));
        assert_relative_eq!(region.radius_px, 1280f64.hypot(1024.0) / 6.0);
        let mk = |id, u, v| Correspondence {
            id,
            pixel: PixelPoint::new(u, v),
            point: Point3::zeros(),
        };
        let pts = [mk(0, 640.0, 512.0), mk(1, 10.0, 10.0), mk(2, 700.0, 600.0)];
        let (central, edge) = region.split(&pts);
        assert_eq!(central.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(edge.iter().map(|c| c.id).collect::<Vec<_>>(), vec![1]);
    }
}
