//! TOML reports written by the calibration and evaluation commands.
//!
//! Reports hold no timestamps or paths: identical inputs and seed give
//! byte-identical files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attitude::AttitudeResult;
use crate::bundle::PointResidual;
use crate::field::{FieldEvaluation, FieldFrame, FieldTestConfig, GroupStats};
use crate::geometry::{
    matrix_to_axis_angle, matrix_to_euler_xyz, CameraIntrinsics, CameraModel,
    DistortionCoefficients, EulerAnglesXYZ, ImageFrame, PoseRT, RotationMatrix,
};
use crate::lm::{LmReport, LmSettings, RobustCost, Termination};
use crate::pipeline::CameraCalibration;
use crate::Result;

pub const REPORT_FORMAT: &str = "collimcal-report";
pub const REPORT_VERSION: u32 = 1;

/// Seeds are written as decimal strings: TOML integers stop at `i64::MAX`.
pub mod seed_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.serialize_str(&v.to_string()),
                None => s.serialize_str("none"),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
            match String::deserialize(d)?.as_str() {
                "none" => Ok(None),
                v => v.parse().map(Some).map_err(D::Error::custom),
            }
        }
    }
}

pub fn tool_version() -> String {
    format!("collimcal {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub tool: String,
    #[serde(with = "seed_string::option")]
    pub seed: Option<u64>,
    /// Input name to SHA-256 of the file bytes.
    pub inputs: BTreeMap<String, String>,
}

impl ReportHeader {
    pub fn new(kind: &str, seed: Option<u64>, inputs: BTreeMap<String, String>) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            kind: kind.into(),
            tool: tool_version(),
            seed,
            inputs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSection {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub k1: f64,
    pub k2: f64,
}

impl CameraSection {
    pub fn new(k: &CameraIntrinsics, d: &DistortionCoefficients) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            u0: k.u0,
            v0: k.v0,
            k1: d.k1,
            k2: d.k2,
        }
    }

    pub fn model(&self) -> Result<CameraModel> {
        Ok(CameraModel::new(
            CameraIntrinsics::new(self.fx, self.fy, self.u0, self.v0)?,
            DistortionCoefficients::new(self.k1, self.k2),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSection {
    /// Row-major.
    pub rotation: [[f64; 3]; 3],
    /// Radians.
    pub axis_angle: [f64; 3],
    pub translation_m: [f64; 3],
    pub euler_deg: Option<EulerAnglesXYZ>,
}

impl PoseSection {
    pub fn new(pose: &PoseRT) -> Result<Self> {
        let r = matrix_to_axis_angle(&pose.rotation)?;
        Ok(Self {
            rotation: pose.rotation.to_rows(),
            axis_angle: [r.0.x, r.0.y, r.0.z],
            translation_m: [pose.translation.x, pose.translation.y, pose.translation.z],
            euler_deg: matrix_to_euler_xyz(&pose.rotation).ok(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSection {
    pub rms_px: f64,
    pub max_px: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub gradient_measure: f64,
    pub termination: Termination,
}

impl From<&LmReport> for SolverSection {
    fn from(r: &LmReport) -> Self {
        let accepted = r.trace.iter().filter(|i| i.accepted).count();
        Self {
            iterations: r.iterations,
            accepted_steps: accepted,
            rejected_steps: r.trace.len() - accepted,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            gradient_measure: r.gradient_measure,
            termination: r.termination,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSection {
    pub count: usize,
    pub central: usize,
    pub edge: usize,
    pub central_fraction: f64,
    pub min_depth_m: f64,
    pub max_depth_m: f64,
    #[serde(with = "seed_string")]
    pub depth_seed: u64,
    pub depth_rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsSection {
    pub cost: RobustCost,
    pub lm: LmSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub frame: ImageFrame,
    pub settings: SettingsSection,
    pub control_points: ControlPointSection,
    pub camera: CameraSection,
    /// Reference-camera frame to test-camera frame.
    pub pose: PoseSection,
    pub initial_camera: CameraSection,
    pub initial_pose: PoseSection,
    pub residuals: ResidualSection,
    pub solver: SolverSection,
    pub per_point: Vec<PointResidual>,
}

impl CameraReport {
    pub fn new(
        header: ReportHeader,
        frame: ImageFrame,
        settings: SettingsSection,
        control_points: ControlPointSection,
        cal: &CameraCalibration,
    ) -> Result<Self> {
        let r = &cal.refined;
        Ok(Self {
            header,
            frame,
            settings,
            control_points,
            camera: CameraSection::new(&r.intrinsics, &r.distortion),
            pose: PoseSection::new(&r.pose)?,
            initial_camera: CameraSection::new(&cal.initial.intrinsics, &cal.initial.distortion),
            initial_pose: PoseSection::new(&cal.initial.pose)?,
            residuals: ResidualSection {
                rms_px: r.rms_reprojection_px,
                max_px: r.max_reprojection_px,
                points: r.per_point_residuals_px.len(),
            },
            solver: SolverSection::from(&r.report),
            per_point: r.per_point_residuals_px.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeSection {
    /// Reticle frame to camera frame, row-major.
    pub r_t: [[f64; 3]; 3],
    pub t_t_m: [f64; 3],
    /// Reference frame to camera frame, row-major.
    pub r_r: [[f64; 3]; 3],
    pub euler_deg: EulerAnglesXYZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub settings: SettingsSection,
    /// Intrinsics and distortion the pose was solved with.
    pub camera: CameraSection,
    pub attitude: AttitudeSection,
    pub residuals: ResidualSection,
    pub solver: SolverSection,
    pub per_point: Vec<PointResidual>,
}

impl AttitudeReport {
    pub fn new(
        header: ReportHeader,
        lm: LmSettings,
        camera: &CameraModel,
        a: &AttitudeResult,
    ) -> Self {
        Self {
            header,
            settings: SettingsSection {
                cost: RobustCost::Squared,
                lm,
            },
            camera: CameraSection::new(&camera.intrinsics, &camera.distortion),
            attitude: AttitudeSection {
                r_t: a.r_t.to_rows(),
                t_t_m: [a.t_t.x, a.t_t.y, a.t_t.z],
                r_r: a.r_r.to_rows(),
                euler_deg: a.euler,
            },
            residuals: ResidualSection {
                rms_px: a.rms_px,
                max_px: a.max_px,
                points: a.per_point_residuals_px.len(),
            },
            solver: SolverSection::from(&a.report),
            per_point: a.per_point_residuals_px.clone(),
        }
    }

    pub fn r_r(&self) -> Result<RotationMatrix> {
        RotationMatrix::from_rows(self.attitude.r_r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalSection {
    pub focal_mm: f64,
    pub pixel_um: f64,
    pub camera: CameraSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySection {
    pub nominal: GroupStats,
    pub calibrated: GroupStats,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub field: FieldTestConfig,
    pub nominal: NominalSection,
    pub calibrated: CameraSection,
    pub summary: SummarySection,
    pub frames: Vec<FieldFrame>,
}

impl EvaluationReport {
    pub fn new(
        header: ReportHeader,
        field: FieldTestConfig,
        nominal: NominalSection,
        calibrated: &CameraModel,
        ev: &FieldEvaluation,
    ) -> Self {
        Self {
            header,
            field,
            nominal,
            calibrated: CameraSection::new(&calibrated.intrinsics, &calibrated.distortion),
            summary: SummarySection {
                nominal: ev.nominal,
                calibrated: ev.calibrated,
                reduction: ev.reduction,
            },
            frames: ev.frames.clone(),
        }
    }

    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "frame", "true_yaw", "true_pit", "nom_yaw", "nom_pit", "cal_yaw", "cal_pit"
        )
        .unwrap();
        for f in &self.frames {
            writeln!(
                s,
                "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                f.index,
                f.truth.yaw_deg,
                f.truth.pitch_deg,
                f.nominal.yaw_deg,
                f.nominal.pitch_deg,
                f.calibrated.yaw_deg,
                f.calibrated.pitch_deg
            )
            .unwrap();
        }
        writeln!(
            s,
            "\n{:<11} {:>13} {:>13} {:>13} {:>13}",
            "group", "yaw_mean_deg", "yaw_std_deg", "pitch_mean", "pitch_std"
        )
        .unwrap();
        for (name, g) in [("nominal", &self.summary.nominal), ("calibrated", &self.summary.calibrated)] {
            writeln!(
                s,
                "{:<11} {:>13.4} {:>13.4} {:>13.4} {:>13.4}",
                name, g.yaw.mean_abs_deg, g.yaw.std_abs_deg, g.pitch.mean_abs_deg, g.pitch.std_abs_deg
            )
            .unwrap();
        }
        writeln!(s, "reduction {:.1}%", 100.0 * self.summary.reduction).unwrap();
        s
    }
}

/// Truth written next to simulated datasets; never read by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(with = "seed_string")]
    pub seed: u64,
    pub test_camera: CameraSection,
    /// Reticle (device reference) frame to test camera.
    pub test_attitude: PoseSection,
    /// Reference-camera frame to test camera.
    pub relative_pose: PoseSection,
    pub reference_camera: CameraSection,
    pub reticle: crate::rig::ReticleSpec,
    pub dropped_reference: Vec<u32>,
    pub dropped_test: Vec<u32>,
}

/// Everything `evaluate` needs to replay the field run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldScenarioFile {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub frame: ImageFrame,
    pub true_camera: CameraSection,
    pub true_euler_deg: EulerAnglesXYZ,
    pub nominal_focal_mm: f64,
    pub nominal_pixel_um: f64,
    pub field: FieldTestConfig,
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("report serializes")
}
