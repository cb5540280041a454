//! Rotation algebra, projection and distortion primitives shared by every solver.

mod camera;
mod rotation;

pub use camera::{
    distort, distort_normalized, pixel_to_ray, project, undistort, CameraIntrinsics, CameraModel,
    DistortionCoefficients, ImageFrame, NormalizedPoint, PixelPoint, Point3, PoseRT,
    UNDISTORT_MAX_ITERATIONS, UNDISTORT_TOLERANCE_PX,
};
pub use rotation::{
    axis_angle_jacobian, axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_euler_xyz, skew,
    AxisAngle, EulerAnglesXYZ, RotationMatrix, ROTATION_TOLERANCE,
};
