use thiserror::Error;

use crate::lm::LmReport;

/// Failures raised by the numerical core.
#[derive(Debug, Error)]
pub enum CalibError {
    #[error("undistortion did not converge after {iterations} iterations (last update {last_step_px:e} px)")]
    NonConvergence { iterations: usize, last_step_px: f64 },

    #[error("point has non-positive depth {depth} in the camera frame")]
    BehindCamera { depth: f64 },

    #[error("matrix is not a rotation (orthonormality error {error:e}, det {det})")]
    NotARotation { error: f64, det: f64 },

    #[error("gimbal lock: |cos(theta_y)| = {cos_y:e} is below threshold")]
    GimbalLock { cos_y: f64 },

    #[error("duplicate feature id {0}")]
    DuplicateId(u32),

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid projection matrix: {0}")]
    InvalidMatrix(String),

    #[error("rank-deficient distortion system (all radii equal or zero)")]
    RankDeficient,

    #[error("optimizer did not converge after {} iterations (cost {:e})", .report.iterations, .report.final_cost)]
    NotConverged { report: Box<LmReport> },

    #[error("no step keeps every point in front of the camera")]
    DivergedBehindCamera,

    #[error("{} point(s) fall outside the {width}x{height} frame: {ids:?}", .ids.len())]
    PointOutsideFrame { ids: Vec<u32>, width: u32, height: u32 },

    #[error("{} point(s) are behind the camera: {ids:?}", .ids.len())]
    PointBehindCamera { ids: Vec<u32> },

    #[error(
        "feature ids do not match: missing from test {missing_in_test:?}, missing from reference {missing_in_reference:?}"
    )]
    IdMismatch {
        missing_in_test: Vec<u32>,
        missing_in_reference: Vec<u32>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;
