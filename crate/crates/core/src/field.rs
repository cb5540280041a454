//! Field comparison of target directions: truth, datasheet (nominal)
//! parameters, and calibrated parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::attitude::{target_direction, TargetDirection};
use crate::error::{CalibError, Result};
use crate::geometry::{CameraModel, ImageFrame, PixelPoint, Point3, RotationMatrix};
use crate::rig::{derive_seed, observe_target, pointing_rotation, presets, TargetScenario};

/// Frames of a field run. Each frame points the device at the target with a
/// random yaw/pitch/roll offset and records one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldTestConfig {
    /// Local frame (`x` right, `y` down, `z` forward), meters.
    pub target_local_m: [f64; 3],
    pub frames: usize,
    pub yaw_jitter_deg: f64,
    pub pitch_jitter_deg: f64,
    pub roll_jitter_deg: f64,
    pub noise_sigma_px: f64,
}

impl Default for FieldTestConfig {
    fn default() -> Self {
        Self {
            target_local_m: presets::FIELD_TARGET_M,
            frames: 30,
            yaw_jitter_deg: 5.0,
            pitch_jitter_deg: 4.0,
            roll_jitter_deg: 2.0,
            noise_sigma_px: 0.1,
        }
    }
}

impl FieldTestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(CalibError::InvalidParameter(what.to_string()));
        if self.frames == 0 {
            return bad("field.frames must be at least 1");
        }
        if !(self.target_local_m[2] > 0.0) {
            return bad("field.target_local_m must be in front of the device (z > 0)");
        }
        for (name, v) in [
            ("field.yaw_jitter_deg", self.yaw_jitter_deg),
            ("field.pitch_jitter_deg", self.pitch_jitter_deg),
            ("field.roll_jitter_deg", self.roll_jitter_deg),
            ("field.noise_sigma_px", self.noise_sigma_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be non-negative (got {v})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldFrame {
    pub index: usize,
    pub pixel: PixelPoint,
    pub truth: TargetDirection,
    pub nominal: TargetDirection,
    pub calibrated: TargetDirection,
}

/// Mean and (population) standard deviation of absolute differences, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub mean_abs_deg: f64,
    pub std_abs_deg: f64,
}

impl AxisStats {
    pub fn of(diffs: &[f64]) -> Self {
        let n = diffs.len() as f64;
        let mean = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d.abs() - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_abs_deg: mean,
            std_abs_deg: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub yaw: AxisStats,
    pub pitch: AxisStats,
    /// Over both axes.
    pub mean_abs_deg: f64,
}

impl GroupStats {
    fn of(frames: &[FieldFrame], pick: impl Fn(&FieldFrame) -> TargetDirection) -> Self {
        let dy: Vec<f64> = frames.iter().map(|f| pick(f).yaw_deg - f.truth.yaw_deg).collect();
        let dp: Vec<f64> = frames.iter().map(|f| pick(f).pitch_deg - f.truth.pitch_deg).collect();
        let (yaw, pitch) = (AxisStats::of(&dy), AxisStats::of(&dp));
        Self {
            yaw,
            pitch,
            mean_abs_deg: (yaw.mean_abs_deg + pitch.mean_abs_deg) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEvaluation {
    pub nominal: GroupStats,
    pub calibrated: GroupStats,
    /// `1 - calibrated / nominal` of the mean absolute error.
    pub reduction: f64,
    pub frames: Vec<FieldFrame>,
}

/// The camera as the device truly is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldTruth {
    pub camera: CameraModel,
    pub r_r: RotationMatrix,
    pub frame: ImageFrame,
}

/// Simulates `cfg.frames` sightings of the target and solves each with the
/// nominal model (identity attitude) and the calibrated model.
pub fn evaluate_field(
    truth: &FieldTruth,
    nominal: &CameraModel,
    calibrated: &CameraModel,
    calibrated_r_r: &RotationMatrix,
    cfg: &FieldTestConfig,
    seed: u64,
) -> Result<FieldEvaluation> {
    cfg.validate()?;
    let [x, y, z] = cfg.target_local_m;
    let local = Point3::new(x, y, z);
    let aim = TargetDirection::from_vector(&local);
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "field-pointing"));
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut attempts = 0usize;
    while frames.len() < cfg.frames {
        attempts += 1;
        if attempts > 100 * cfg.frames {
            return Err(CalibError::InvalidParameter(
                "field jitter keeps the target outside the frame".into(),
            ));
        }
        let mut jitter = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        let device = pointing_rotation(
            aim.yaw_deg + jitter(cfg.yaw_jitter_deg),
            aim.pitch_deg + jitter(cfg.pitch_jitter_deg),
            jitter(cfg.roll_jitter_deg),
        );
        let tgt = TargetScenario {
            target_position_m: device.rotate(&local),
            true_r_r: truth.r_r,
        };
        let noise_seed = derive_seed(seed, &format!("field-noise-{attempts}"));
        let Ok(obs) = observe_target(&truth.camera, &tgt, cfg.noise_sigma_px, noise_seed) else {
            continue;
        };
        if !truth.frame.contains(&obs.pixel) {
            continue;
        }
        frames.push(FieldFrame {
            index: frames.len(),
            pixel: obs.pixel,
            truth: obs.true_direction,
            nominal: target_direction(
                &nominal.intrinsics,
                &nominal.distortion,
                &RotationMatrix::identity(),
                obs.pixel,
            )?,
            calibrated: target_direction(
                &calibrated.intrinsics,
                &calibrated.distortion,
                calibrated_r_r,
                obs.pixel,
            )?,
        });
    }
    let nominal = GroupStats::of(&frames, |f| f.nominal);
    let calibrated = GroupStats::of(&frames, |f| f.calibrated);
    Ok(FieldEvaluation {
        reduction: 1.0 - calibrated.mean_abs_deg / nominal.mean_abs_deg,
        nominal,
        calibrated,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::build_nominal_intrinsics;

    fn truth() -> FieldTruth {
        FieldTruth {
            camera: presets::device_camera(),
            r_r: presets::device_attitude().to_matrix(),
            frame: presets::DEVICE_FRAME,
        }
    }

    #[test]
    fn perfect_calibration_has_zero_error() {
        let t = truth();
        let cfg = FieldTestConfig {
            noise_sigma_px: 0.0,
            ..Default::default()
        };
        let nominal = build_nominal_intrinsics(12.0, 4.5, 1280, 1024).unwrap();
        let ev = evaluate_field(&t, &nominal, &t.camera, &t.r_r, &cfg, 1).unwrap();
        assert_eq!(ev.frames.len(), 30);
        assert!(ev.calibrated.mean_abs_deg < 1e-9);
        assert!(ev.nominal.mean_abs_deg > 0.1);
        assert!(ev.reduction > 0.999);
    }

    #[test]
    fn stats_of_absolute_differences() {
        let s = AxisStats::of(&[1.0, -3.0]);
        assert_eq!(s.mean_abs_deg, 2.0);
        assert_eq!(s.std_abs_deg, 1.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let t = truth();
        let cfg = FieldTestConfig::default();
        let nominal = build_nominal_intrinsics(12.0, 4.5, 1280, 1024).unwrap();
        let a = evaluate_field(&t, &nominal, &t.camera, &t.r_r, &cfg, 4).unwrap();
        let b = evaluate_field(&t, &nominal, &t.camera, &t.r_r, &cfg, 4).unwrap();
        assert_eq!(a, b);
    }
}
