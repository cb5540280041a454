//! Nonlinear refinement of intrinsics, distortion and pose by minimizing the
//! (robust) reprojection error against fixed control points.
//!
//! Parameter vector, in order: `fx, fy, u0, v0` (px), `k1, k2`, the
//! axis-angle rotation `r` (rad) and the translation `t` (m). The Jacobian is
//! analytic; Marquardt's diagonal scaling inside [`crate::lm`] balances the
//! very different magnitudes of these blocks.

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dlt::{Correspondence, InitialCalibration};
use crate::error::{CalibError, Result};
use crate::geometry::{
    axis_angle_jacobian, axis_angle_to_matrix, matrix_to_axis_angle, project, AxisAngle,
    CameraIntrinsics, DistortionCoefficients, PixelPoint, Point3, PoseRT,
};
use crate::lm::{minimize, LeastSquaresProblem, LmReport, LmSettings, RobustCost};

/// Two equations per point and twelve unknowns, with margin.
pub const MIN_BUNDLE_POINTS: usize = 8;

pub const CAMERA_PARAMS: usize = 12;

/// Residual of one feature: predicted minus observed pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    pub id: u32,
    pub du: f64,
    pub dv: f64,
}

impl PointResidual {
    pub fn norm(&self) -> f64 {
        self.du.hypot(self.dv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionStats {
    /// `sqrt(mean_i |e_i|^2)` over points, `e_i` the 2-D residual.
    pub rms_px: f64,
    pub max_px: f64,
    pub per_point: Vec<PointResidual>,
}

impl ReprojectionStats {
    pub fn from_residuals(per_point: Vec<PointResidual>) -> Self {
        let n = per_point.len();
        // summed in sorted order so the result does not depend on point order
        let mut sq: Vec<f64> = per_point.iter().map(|r| r.du * r.du + r.dv * r.dv).collect();
        sq.sort_by(f64::total_cmp);
        let sum_sq: f64 = sq.iter().sum();
        let max_px = per_point.iter().map(PointResidual::norm).fold(0.0, f64::max);
        let rms_px = if n == 0 { 0.0 } else { (sum_sq / n as f64).sqrt() };
        Self {
            rms_px,
            max_px,
            per_point,
        }
    }
}

/// Residual statistics of `obs` under the full forward model.
pub fn reprojection_stats(
    intrinsics: &CameraIntrinsics,
    distortion: &DistortionCoefficients,
    pose: &PoseRT,
    obs: &[Correspondence],
) -> Result<ReprojectionStats> {
    let per_point = obs
        .iter()
        .map(|c| {
            let p = project(&c.point, pose, intrinsics, distortion)?;
            Ok(PointResidual {
                id: c.id,
                du: p.u - c.pixel.u,
                dv: p.v - c.pixel.v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReprojectionStats::from_residuals(per_point))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedCalibration {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoefficients,
    pub pose: PoseRT,
    pub rms_reprojection_px: f64,
    pub max_reprojection_px: f64,
    pub per_point_residuals_px: Vec<PointResidual>,
    pub cost: RobustCost,
    pub report: LmReport,
}

/// Pixel of a camera-frame point together with its partial derivatives with
/// respect to the point and to `(fx, fy, u0, v0, k1, k2)`.
pub(crate) struct ProjectionPartials {
    pub pixel: PixelPoint,
    pub d_point: Matrix2x3<f64>,
    pub d_camera: [[f64; 6]; 2],
}

pub(crate) fn projection_partials(
    pc: &Vector3<f64>,
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
) -> ProjectionPartials {
    let inv_z = 1.0 / pc.z;
    let x = pc.x * inv_z;
    let y = pc.y * inv_z;
    let r2 = x * x + y * y;
    let s = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
    let ds = d.k1 + 2.0 * d.k2 * r2; // d s / d r2
    let (xd, yd) = (x * s, y * s);

    let dxd_dx = s + 2.0 * x * x * ds;
    let dxd_dy = 2.0 * x * y * ds;
    let dyd_dx = dxd_dy;
    let dyd_dy = s + 2.0 * y * y * ds;

    // d(x, y)/d(pc)
    let dx = [inv_z, 0.0, -x * inv_z];
    let dy = [0.0, inv_z, -y * inv_z];
    let mut d_point = Matrix2x3::zeros();
    for j in 0..3 {
        d_point[(0, j)] = k.fx * (dxd_dx * dx[j] + dxd_dy * dy[j]);
        d_point[(1, j)] = k.fy * (dyd_dx * dx[j] + dyd_dy * dy[j]);
    }
    let d_camera = [
        [xd, 0.0, 1.0, 0.0, k.fx * x * r2, k.fx * x * r2 * r2],
        [0.0, yd, 0.0, 1.0, k.fy * y * r2, k.fy * y * r2 * r2],
    ];
    ProjectionPartials {
        pixel: PixelPoint::new(k.fx * xd + k.u0, k.fy * yd + k.v0),
        d_point,
        d_camera,
    }
}

/// Reprojection residuals of fixed control points as a function of all
/// twelve camera parameters.
pub struct CameraProblem<'a> {
    obs: &'a [Correspondence],
}

impl<'a> CameraProblem<'a> {
    pub fn new(obs: &'a [Correspondence]) -> Self {
        Self { obs }
    }

    pub fn pack(calib: &InitialCalibration) -> Result<DVector<f64>> {
        let r = matrix_to_axis_angle(&calib.pose.rotation)?;
        let (k, d, t) = (&calib.intrinsics, &calib.distortion, &calib.pose.translation);
        Ok(DVector::from_vec(vec![
            k.fx, k.fy, k.u0, k.v0, d.k1, d.k2, r.0.x, r.0.y, r.0.z, t.x, t.y, t.z,
        ]))
    }

    pub fn unpack(p: &DVector<f64>) -> (CameraIntrinsics, DistortionCoefficients, AxisAngle, Vector3<f64>) {
        (
            CameraIntrinsics {
                fx: p[0],
                fy: p[1],
                u0: p[2],
                v0: p[3],
            },
            DistortionCoefficients::new(p[4], p[5]),
            AxisAngle::new(p[6], p[7], p[8]),
            Vector3::new(p[9], p[10], p[11]),
        )
    }
}

impl LeastSquaresProblem for CameraProblem<'_> {
    fn num_params(&self) -> usize {
        CAMERA_PARAMS
    }

    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let (k, d, r, t) = Self::unpack(p);
        let rot = axis_angle_to_matrix(&r);
        let mut out = DVector::zeros(2 * self.obs.len());
        for (i, c) in self.obs.iter().enumerate() {
            let pc = rot.rotate(&c.point) + t;
            if !(pc.z > 0.0) {
                return None;
            }
            let px = projection_partials(&pc, &k, &d).pixel;
            out[2 * i] = px.u - c.pixel.u;
            out[2 * i + 1] = px.v - c.pixel.v;
        }
        Some(out)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (k, d, r, t) = Self::unpack(p);
        let rot = axis_angle_to_matrix(&r);
        let d_rot = axis_angle_jacobian(&r);
        let mut jac = DMatrix::zeros(2 * self.obs.len(), CAMERA_PARAMS);
        for (i, c) in self.obs.iter().enumerate() {
            let pc = rot.rotate(&c.point) + t;
            let part = projection_partials(&pc, &k, &d);
            let dpc_dr: [Point3; 3] = [d_rot[0] * c.point, d_rot[1] * c.point, d_rot[2] * c.point];
            for row in 0..2 {
                let jr = 2 * i + row;
                for j in 0..6 {
                    jac[(jr, j)] = part.d_camera[row][j];
                }
                for (a, v) in dpc_dr.iter().enumerate() {
                    jac[(jr, 6 + a)] = (part.d_point.row(row) * v)[0];
                }
                for a in 0..3 {
                    jac[(jr, 9 + a)] = part.d_point[(row, a)];
                }
            }
        }
        jac
    }
}

/// Refines every camera parameter from `init` against fixed control points.
pub fn refine_camera(
    init: &InitialCalibration,
    obs: &[Correspondence],
    cost: &RobustCost,
    settings: &LmSettings,
) -> Result<RefinedCalibration> {
    if obs.len() < MIN_BUNDLE_POINTS {
        return Err(CalibError::InsufficientPoints {
            needed: MIN_BUNDLE_POINTS,
            got: obs.len(),
        });
    }
    init.intrinsics.validate()?;
    let problem = CameraProblem::new(obs);
    let x0 = CameraProblem::pack(init)?;
    let (x, report) = minimize(&problem, x0, cost, settings)?;

    let (intrinsics, distortion, r, t) = CameraProblem::unpack(&x);
    intrinsics.validate()?;
    let pose = PoseRT::new(axis_angle_to_matrix(&r.canonical()), t);
    let stats = reprojection_stats(&intrinsics, &distortion, &pose, obs)?;
    Ok(RefinedCalibration {
        intrinsics,
        distortion,
        pose,
        rms_reprojection_px: stats.rms_px,
        max_reprojection_px: stats.max_px,
        per_point_residuals_px: stats.per_point,
        cost: *cost,
        report,
    })
}
