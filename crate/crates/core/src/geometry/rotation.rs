//! Rotation representations: orthonormal matrices, axis-angle vectors (Rodrigues
//! formula in both directions) and fixed-axis X-Y-Z Euler angles.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Orthonormality error above which a matrix is rejected as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Below this angle (radians) the Rodrigues formula switches to its Taylor series.
const SMALL_ANGLE: f64 = 1e-12;

/// Threshold on |cos(theta_y)| under which Euler extraction reports gimbal lock.
const GIMBAL_LOCK_COS: f64 = 1e-9;

/// A 3x3 proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checks orthonormality and determinant before accepting `m`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let error = orthonormality_error(&m);
        let det = m.determinant();
        if !error.is_finite() || error > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE
        {
            return Err(CalibError::NotARotation { error, det });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without validation. Callers guarantee it is a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Nearest rotation in the Frobenius sense (orthogonal polar factor with det +1).
    pub fn nearest(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(CalibError::NotARotation {
                error: f64::NAN,
                det: f64::NAN,
            });
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => {
                return Err(CalibError::NotARotation {
                    error: f64::NAN,
                    det: m.determinant(),
                })
            }
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // flip the direction paired with the smallest singular value
            let smallest = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(2);
            let mut u_flipped = u;
            u_flipped.column_mut(smallest).neg_mut();
            r = u_flipped * v_t;
        }
        Ok(Self(r))
    }

    /// Rotation about the x axis by `angle` radians.
    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation about the y axis by `angle` radians.
    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Geodesic distance (radians) to `other`.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        let rel = self.0.transpose() * other.0;
        let v = vee(&(rel - rel.transpose())) * 0.5;
        let c = (rel.trace() - 1.0) * 0.5;
        v.norm().atan2(c)
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Axis-angle vector: direction is the rotation axis, norm the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Representative with angle in `[0, pi]`. At exactly pi the axis is
    /// chosen with its first nonzero component positive.
    pub fn canonical(&self) -> Self {
        let theta = self.0.norm();
        if theta == 0.0 || !theta.is_finite() {
            return *self;
        }
        let axis = self.0 / theta;
        let mut wrapped = theta.rem_euclid(2.0 * PI);
        let mut axis = axis;
        if wrapped > PI {
            wrapped = 2.0 * PI - wrapped;
            axis = -axis;
        }
        if wrapped == PI {
            axis = positive_first(axis);
        }
        Self(axis * wrapped)
    }
}

fn positive_first(axis: Vector3<f64>) -> Vector3<f64> {
    let first = axis.iter().copied().find(|c| *c != 0.0).unwrap_or(0.0);
    if first < 0.0 {
        -axis
    } else {
        axis
    }
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

/// Rodrigues formula: `R = I + sin(t)[a]x + (1 - cos(t))[a]x^2`.
pub fn axis_angle_to_matrix(r: &AxisAngle) -> RotationMatrix {
    let theta = r.angle();
    let k = skew(&r.0);
    if theta < SMALL_ANGLE {
        return RotationMatrix(Matrix3::identity() + k + k * k * 0.5);
    }
    let a = k / theta;
    RotationMatrix(Matrix3::identity() + a * theta.sin() + a * a * (1.0 - theta.cos()))
}

/// Inverse Rodrigues map returning the canonical representative.
pub fn matrix_to_axis_angle(rot: &RotationMatrix) -> Result<AxisAngle> {
    let m = rot.matrix();
    let error = orthonormality_error(m);
    let det = m.determinant();
    if !error.is_finite() || error > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(CalibError::NotARotation { error, det });
    }

    // v = sin(theta) * axis
    let v = vee(&(m - m.transpose())) * 0.5;
    let s = v.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if c >= 0.0 {
        if s < SMALL_ANGLE {
            return Ok(AxisAngle(v));
        }
        return Ok(AxisAngle(v * (theta / s)));
    }

    // Beyond 90 degrees the symmetric part is better conditioned:
    // (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T.
    let b = (m + m.transpose()) * 0.5 - Matrix3::identity() * c;
    let (mut best, mut best_val) = (0, b[(0, 0)]);
    for i in 1..3 {
        if b[(i, i)] > best_val {
            best = i;
            best_val = b[(i, i)];
        }
    }
    let mut axis: Vector3<f64> = b.column(best).into_owned();
    axis /= axis.norm();
    if s > 1e-15 && axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    let theta = if s <= 1e-15 { PI } else { theta };
    Ok(AxisAngle(axis * theta).canonical())
}

/// Partial derivatives of the Rodrigues map, `dR/dr_i` for `i = 0..3`.
pub fn axis_angle_jacobian(r: &AxisAngle) -> [Matrix3<f64>; 3] {
    let v = r.0;
    let theta2 = v.norm_squared();
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    if theta2 < 1e-16 {
        // dR/dv_i = [e_i]x + 0.5([e_i]x[v]x + [v]x[e_i]x) + O(|v|^2)
        let k = skew(&v);
        return basis.map(|e| {
            let ei = skew(&e);
            ei + (ei * k + k * ei) * 0.5
        });
    }
    // Gallego & Yezzi: dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) R / |v|^2
    let rot = *axis_angle_to_matrix(r).matrix();
    let k = skew(&v);
    let i_minus_r = Matrix3::identity() - rot;
    let mut out = [Matrix3::zeros(); 3];
    for (i, e) in basis.iter().enumerate() {
        let w = v.cross(&(i_minus_r * e));
        out[i] = (k * v[i] + skew(&w)) * rot / theta2;
    }
    out
}

/// Euler angles in degrees for the fixed-axis X-Y-Z sequence, `R = Rz * Ry * Rx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAnglesXYZ {
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl EulerAnglesXYZ {
    pub fn new(theta_x: f64, theta_y: f64, theta_z: f64) -> Self {
        Self {
            theta_x,
            theta_y,
            theta_z,
        }
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        RotationMatrix::about_z(self.theta_z.to_radians())
            * RotationMatrix::about_y(self.theta_y.to_radians())
            * RotationMatrix::about_x(self.theta_x.to_radians())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta_x, self.theta_y, self.theta_z]
    }
}

fn wrap_degrees(angle: f64) -> f64 {
    if angle <= -180.0 {
        angle + 360.0
    } else {
        angle
    }
}

/// Extracts `(theta_x, theta_y, theta_z)` with `R = Rz(theta_z) Ry(theta_y) Rx(theta_x)`.
pub fn matrix_to_euler_xyz(rot: &RotationMatrix) -> Result<EulerAnglesXYZ> {
    let m = rot.matrix();
    let cos_y = m[(0, 0)].hypot(m[(1, 0)]);
    if cos_y < GIMBAL_LOCK_COS {
        return Err(CalibError::GimbalLock { cos_y });
    }
    let theta_y = (-m[(2, 0)]).atan2(cos_y);
    let theta_x = m[(2, 1)].atan2(m[(2, 2)]);
    let theta_z = m[(1, 0)].atan2(m[(0, 0)]);
    Ok(EulerAnglesXYZ {
        theta_x: wrap_degrees(theta_x.to_degrees()),
        theta_y: wrap_degrees(theta_y.to_degrees()),
        theta_z: wrap_degrees(theta_z.to_degrees()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_vector_is_identity() {
        let r = axis_angle_to_matrix(&AxisAngle::zero());
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let r = axis_angle_to_matrix(&AxisAngle::new(0.0, 0.0, FRAC_PI_2));
        let y = r.rotate(&Vector3::x());
        assert_abs_diff_eq!(y, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn matches_scipy_rotvec() {
        // scipy Rotation.from_rotvec(5 deg * (1,2,3)/sqrt(14)).as_matrix()
        let expected = Matrix3::new(
            0.9964665053709066,
            -0.06933644158129464,
            0.0474021259305609,
            0.07042367069793877,
            0.9972819272083898,
            -0.0216625083715727,
            -0.0457712822555947,
            0.024924195721505102,
            0.998640963604195,
        );
        let axis = Vector3::new(1.0, 2.0, 3.0) / 14f64.sqrt();
        let r = axis_angle_to_matrix(&AxisAngle(axis * 5f64.to_radians()));
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn identity_maps_to_zero_vector() {
        let r = matrix_to_axis_angle(&RotationMatrix::identity()).unwrap();
        assert_eq!(r.0, Vector3::zeros());
    }

    #[test]
    fn half_turn_about_z() {
        let rot = RotationMatrix::about_z(PI);
        let r = matrix_to_axis_angle(&rot).unwrap();
        assert_abs_diff_eq!(r.0, Vector3::new(0.0, 0.0, PI), epsilon = 1e-12);
        // the negative-axis input lands on the same representative
        let rot = axis_angle_to_matrix(&AxisAngle::new(0.0, 0.0, -PI));
        let r = matrix_to_axis_angle(&rot).unwrap();
        assert_abs_diff_eq!(r.0, Vector3::new(0.0, 0.0, PI), epsilon = 1e-12);
    }

    #[test]
    fn canonical_wraps_large_angles() {
        let r = AxisAngle::new(0.0, 0.0, 1.5 * PI).canonical();
        assert_abs_diff_eq!(r.0, Vector3::new(0.0, 0.0, -0.5 * PI), epsilon = 1e-12);
        let r = AxisAngle::new(0.0, -PI, 0.0).canonical();
        assert_eq!(r.0, Vector3::new(0.0, PI, 0.0));
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let bad = RotationMatrix::from_matrix_unchecked(m);
        assert!(matches!(
            matrix_to_axis_angle(&bad),
            Err(CalibError::NotARotation { .. })
        ));
        assert!(RotationMatrix::from_matrix(m).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RotationMatrix::from_matrix(reflection).is_err());
    }

    #[test]
    fn nearest_repairs_perturbed_rotation() {
        let r = axis_angle_to_matrix(&AxisAngle::new(0.1, -0.2, 0.3));
        let noisy = r.matrix() + Matrix3::from_fn(|i, j| 1e-4 * ((i * 3 + j) as f64).sin());
        let fixed = RotationMatrix::nearest(&noisy).unwrap();
        assert!(orthonormality_error(fixed.matrix()) < 1e-12);
        assert_abs_diff_eq!(fixed.matrix().determinant(), 1.0, epsilon = 1e-12);
        assert!(fixed.angle_to(&r) < 1e-3);
        // a reflection is mapped to a proper rotation
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let fixed = RotationMatrix::nearest(&refl).unwrap();
        assert_abs_diff_eq!(fixed.matrix().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_identity_and_single_axis() {
        let e = matrix_to_euler_xyz(&RotationMatrix::identity()).unwrap();
        assert_eq!(e.as_array(), [0.0, 0.0, 0.0]);
        let e = matrix_to_euler_xyz(&RotationMatrix::about_x(10f64.to_radians())).unwrap();
        assert_abs_diff_eq!(e.theta_x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.theta_y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.theta_z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_matches_scipy_extrinsic_xyz() {
        // scipy Rotation.from_euler("xyz", [-1.5324, -0.0632, -0.4851], degrees=True)
        let expected = Matrix3::new(
            0.9999635502866748,
            0.008492960024571113,
            -0.0008762009414606311,
            -0.008466485899086804,
            0.9996062841243157,
            0.026750614118152986,
            0.0011030478635778895,
            -0.026742220723021466,
            0.9996417542881109,
        );
        let r = EulerAnglesXYZ::new(-1.5324, -0.0632, -0.4851).to_matrix();
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-15);
        let e = matrix_to_euler_xyz(&r).unwrap();
        assert_abs_diff_eq!(e.theta_x, -1.5324, epsilon = 1e-12);
        assert_abs_diff_eq!(e.theta_y, -0.0632, epsilon = 1e-12);
        assert_abs_diff_eq!(e.theta_z, -0.4851, epsilon = 1e-12);
    }

    #[test]
    fn gimbal_lock_is_reported() {
        let r = RotationMatrix::about_y(FRAC_PI_2);
        assert!(matches!(
            matrix_to_euler_xyz(&r),
            Err(CalibError::GimbalLock { .. })
        ));
    }

    #[test]
    fn half_turn_euler_is_positive_180() {
        let e = matrix_to_euler_xyz(&RotationMatrix::about_z(PI)).unwrap();
        assert_eq!(e.theta_z, 180.0);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for r in [
            AxisAngle::new(0.3, -0.7, 1.1),
            AxisAngle::new(1e-9, 2e-9, -1e-9),
            AxisAngle::new(0.0, 0.0, 3.0),
        ] {
            let jac = axis_angle_jacobian(&r);
            let h = 1e-6;
            for i in 0..3 {
                let mut plus = r.0;
                let mut minus = r.0;
                plus[i] += h;
                minus[i] -= h;
                let fd = (axis_angle_to_matrix(&AxisAngle(plus)).matrix()
                    - axis_angle_to_matrix(&AxisAngle(minus)).matrix())
                    / (2.0 * h);
                assert_abs_diff_eq!(jac[i], fd, epsilon = 1e-8);
            }
        }
    }
}
