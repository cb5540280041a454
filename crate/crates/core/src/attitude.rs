//! Pose of the planar reticle relative to the test camera, and through the
//! frame-parallel calibration fixture, the camera's attitude relative to the
//! device reference frame.
//!
//! Pipeline: undistort, estimate the plane-to-image homography, decompose it
//! into an initial `(R_t, t_t)`, refine both by Levenberg-Marquardt with
//! intrinsics and distortion frozen.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::bundle::{projection_partials, PointResidual, ReprojectionStats};
use crate::dlt::{similarity_2d, DEGENERACY_RATIO};
use crate::error::{CalibError, Result};
use crate::geometry::{
    axis_angle_jacobian, axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_euler_xyz, project,
    undistort, AxisAngle, CameraIntrinsics, DistortionCoefficients, EulerAnglesXYZ, PixelPoint,
    Point3, PoseRT, RotationMatrix,
};
use crate::lm::{minimize, LeastSquaresProblem, LmReport, LmSettings, RobustCost};

pub const MIN_HOMOGRAPHY_POINTS: usize = 4;

pub const POSE_PARAMS: usize = 6;

/// An observed pixel and its known position on the reticle plane (`Z = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarCorrespondence {
    pub id: u32,
    pub pixel: PixelPoint,
    /// Meters, reticle frame.
    pub target: Vector2<f64>,
}

impl PlanarCorrespondence {
    pub fn target_point(&self) -> Point3 {
        Point3::new(self.target.x, self.target.y, 0.0)
    }
}

/// Plane-to-image map `s [u v 1]^T = H [X Y 1]^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    /// `K [r1 r2 t]` for a plane at `Z = 0`.
    pub fn compose(k: &CameraIntrinsics, pose: &PoseRT) -> Self {
        let r = pose.rotation.matrix();
        let mut h = Matrix3::zeros();
        h.set_column(0, &r.column(0));
        h.set_column(1, &r.column(1));
        h.set_column(2, &pose.translation);
        Homography(k.matrix() * h)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Unit Frobenius norm with a non-negative bottom-right entry.
    pub fn normalized(&self) -> Self {
        let mut h = self.0 / self.0.norm();
        if h[(2, 2)] < 0.0 {
            h = -h;
        }
        Homography(h)
    }

    pub fn apply(&self, target: &Vector2<f64>) -> PixelPoint {
        let p = self.0 * Vector3::new(target.x, target.y, 1.0);
        PixelPoint::new(p.x / p.z, p.y / p.z)
    }
}

fn check_planar(pts: &[PlanarCorrespondence]) -> Result<()> {
    if pts.len() < MIN_HOMOGRAPHY_POINTS {
        return Err(CalibError::InsufficientPoints {
            needed: MIN_HOMOGRAPHY_POINTS,
            got: pts.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for p in pts {
        if !seen.insert(p.id) {
            return Err(CalibError::DuplicateId(p.id));
        }
        if !(p.target.x.is_finite() && p.target.y.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "target coordinates of id {} are not finite",
                p.id
            )));
        }
    }
    Ok(())
}

/// Direct linear homography from ideal (undistorted) pixels, both planes
/// normalized.
pub fn estimate_homography(
    pts: &[PlanarCorrespondence],
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> Result<Homography> {
    check_planar(pts)?;
    k.validate()?;
    let ideal = pts
        .iter()
        .map(|p| undistort(p.pixel, k, d))
        .collect::<Result<Vec<_>>>()?;

    let t_target = similarity_2d(pts.iter().map(|p| (p.target.x, p.target.y)));
    let t_image = similarity_2d(ideal.iter().map(|p| (p.u, p.v)));

    // Scatter of the normalized targets: rank 1 means collinear.
    let mut scatter = nalgebra::Matrix2::zeros();
    for p in pts {
        let q = t_target * Vector3::new(p.target.x, p.target.y, 1.0);
        let v = Vector2::new(q.x, q.y);
        scatter += v * v.transpose();
    }
    let eig = scatter.symmetric_eigenvalues();
    if !(eig.max() > 0.0) || eig.min() / eig.max() < DEGENERACY_RATIO {
        return Err(CalibError::DegenerateConfiguration(
            "target points are collinear".into(),
        ));
    }

    let rows = (2 * pts.len()).max(9);
    let mut a = DMatrix::zeros(rows, 9);
    for (i, (p, q)) in pts.iter().zip(&ideal).enumerate() {
        let s = t_target * Vector3::new(p.target.x, p.target.y, 1.0);
        let m = t_image * Vector3::new(q.u, q.v, 1.0);
        let (x, y, u, v) = (s.x, s.y, m.x, m.y);
        a.row_mut(2 * i)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(2 * i + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    // The smallest direction must be unique: a second near-null direction
    // means three or more points leave the map underdetermined.
    if !(sv[order[8]] > 0.0) || sv[order[1]] / sv[order[8]] < DEGENERACY_RATIO {
        return Err(CalibError::DegenerateConfiguration(
            "homography system has more than one null direction".into(),
        ));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_image_inv = t_image
        .try_inverse()
        .ok_or_else(|| CalibError::DegenerateConfiguration("image points coincide".into()))?;
    Ok(Homography(t_image_inv * hn * t_target).normalized())
}

/// Closed-form pose from `H ~ K [r1 r2 t]`, with metric `t` and `t_z > 0`.
pub fn decompose_homography(h: &Homography, k: &CameraIntrinsics) -> Result<PoseRT> {
    k.validate()?;
    let a = k.inverse_matrix() * h.0;
    let a1 = a.column(0).into_owned();
    let a2 = a.column(1).into_owned();
    let (n1, n2) = (a1.norm(), a2.norm());
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(CalibError::DegenerateConfiguration(
            "homography is singular".into(),
        ));
    }
    let mut r1 = a1 / n1;
    let mut r2 = a2 / n2;
    let mut t = a.column(2) / n1;
    if !(t.z.abs() > 0.0) {
        return Err(CalibError::BehindCamera { depth: t.z });
    }
    if t.z < 0.0 {
        r1 = -r1;
        r2 = -r2;
        t = -t;
    }
    let r3 = r1.cross(&r2);
    let rotation = RotationMatrix::nearest(&Matrix3::from_columns(&[r1, r2, r3]))?;
    Ok(PoseRT::new(rotation, t))
}

/// Reticle-plane reprojection residuals as a function of `(r_t, t_t)`.
pub struct PoseProblem<'a> {
    pts: &'a [PlanarCorrespondence],
    k: CameraIntrinsics,
    d: DistortionCoefficients,
}

impl<'a> PoseProblem<'a> {
    pub fn new(
        pts: &'a [PlanarCorrespondence],
        k: CameraIntrinsics,
        d: DistortionCoefficients,
    ) -> Self {
        Self { pts, k, d }
    }

    pub fn pack(pose: &PoseRT) -> Result<DVector<f64>> {
        let r = matrix_to_axis_angle(&pose.rotation)?;
        let t = pose.translation;
        Ok(DVector::from_vec(vec![r.0.x, r.0.y, r.0.z, t.x, t.y, t.z]))
    }

    pub fn unpack(p: &DVector<f64>) -> (AxisAngle, Vector3<f64>) {
        (
            AxisAngle::new(p[0], p[1], p[2]),
            Vector3::new(p[3], p[4], p[5]),
        )
    }
}

impl LeastSquaresProblem for PoseProblem<'_> {
    fn num_params(&self) -> usize {
        POSE_PARAMS
    }

    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let (r, t) = Self::unpack(p);
        let rot = axis_angle_to_matrix(&r);
        let mut out = DVector::zeros(2 * self.pts.len());
        for (i, c) in self.pts.iter().enumerate() {
            let pc = rot.rotate(&c.target_point()) + t;
            if !(pc.z > 0.0) {
                return None;
            }
            let px = projection_partials(&pc, &self.k, &self.d).pixel;
            out[2 * i] = px.u - c.pixel.u;
            out[2 * i + 1] = px.v - c.pixel.v;
        }
        Some(out)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (r, t) = Self::unpack(p);
        let rot = axis_angle_to_matrix(&r);
        let d_rot = axis_angle_jacobian(&r);
        let mut jac = DMatrix::zeros(2 * self.pts.len(), POSE_PARAMS);
        for (i, c) in self.pts.iter().enumerate() {
            let x = c.target_point();
            let part = projection_partials(&(rot.rotate(&x) + t), &self.k, &self.d);
            for a in 0..3 {
                let dr = part.d_point * (d_rot[a] * x);
                jac[(2 * i, a)] = dr.x;
                jac[(2 * i + 1, a)] = dr.y;
                jac[(2 * i, 3 + a)] = part.d_point[(0, a)];
                jac[(2 * i + 1, 3 + a)] = part.d_point[(1, a)];
            }
        }
        jac
    }
}

/// Attitude of the test camera. `r_r` is the camera's rotation relative to
/// the reference frame, identical to the reticle rotation `r_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeResult {
    /// Reticle frame to camera frame.
    pub r_t: RotationMatrix,
    /// Meters.
    pub t_t: Vector3<f64>,
    pub r_r: RotationMatrix,
    /// Degrees, of `r_r`.
    pub euler: EulerAnglesXYZ,
    pub rms_px: f64,
    pub max_px: f64,
    pub per_point_residuals_px: Vec<PointResidual>,
    pub report: LmReport,
}

/// Refines `(R_t, t_t)` with frozen intrinsics and distortion under the
/// plain squared reprojection cost.
pub fn refine_pose(
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    init: &PoseRT,
    pts: &[PlanarCorrespondence],
    settings: &LmSettings,
) -> Result<AttitudeResult> {
    check_planar(pts)?;
    k.validate()?;
    let problem = PoseProblem::new(pts, *k, *d);
    let x0 = PoseProblem::pack(init)?;
    let (x, report) = minimize(&problem, x0, &RobustCost::Squared, settings)?;
    let (r, t_t) = PoseProblem::unpack(&x);
    let r_t = axis_angle_to_matrix(&r.canonical());
    let pose = PoseRT::new(r_t, t_t);

    let per_point = pts
        .iter()
        .map(|c| {
            let p = project(&c.target_point(), &pose, k, d)?;
            Ok(PointResidual {
                id: c.id,
                du: p.u - c.pixel.u,
                dv: p.v - c.pixel.v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = ReprojectionStats::from_residuals(per_point);
    Ok(AttitudeResult {
        r_t,
        t_t,
        r_r: r_t,
        euler: matrix_to_euler_xyz(&r_t)?,
        rms_px: stats.rms_px,
        max_px: stats.max_px,
        per_point_residuals_px: stats.per_point,
        report,
    })
}

/// Homography, decomposition and refinement in one call.
pub fn calibrate_attitude(
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    pts: &[PlanarCorrespondence],
    settings: &LmSettings,
) -> Result<AttitudeResult> {
    let h = estimate_homography(pts, k, d)?;
    let init = decompose_homography(&h, k)?;
    refine_pose(k, d, &init, pts, settings)
}

/// Direction of a ray in the reference frame: `x` right, `y` down, `z`
/// forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetDirection {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl TargetDirection {
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self {
            yaw_deg: v.x.atan2(v.z).to_degrees(),
            pitch_deg: (-v.y).atan2(v.x.hypot(v.z)).to_degrees(),
        }
    }
}

/// Yaw and pitch of the target imaged at `pixel`.
pub fn target_direction(
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    r_r: &RotationMatrix,
    pixel: PixelPoint,
) -> Result<TargetDirection> {
    let ideal = undistort(pixel, k, d)?;
    let n = crate::geometry::pixel_to_ray(ideal, k).ray();
    Ok(TargetDirection::from_vector(&r_r.transpose().rotate(&n)))
}
