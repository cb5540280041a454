//! Synthetic collimator bench and field test: the ground-truth generator for
//! every solver in the crate.
//!
//! The reticle sits at the focal plane of a collimator of focal length
//! `collimator_focal_m`, so every camera on the bench sees it at infinity from
//! one common projection centre. A camera with attitude `R` (reticle frame to
//! camera frame) therefore sees reticle point `(X, Y)` along `R [X, Y, f]`.

use std::collections::BTreeSet;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attitude::{PlanarCorrespondence, TargetDirection};
use crate::error::{CalibError, Result};
use crate::geometry::{
    CameraIntrinsics, CameraModel, DistortionCoefficients, EulerAnglesXYZ, ImageFrame, PixelPoint,
    Point3, PoseRT, RotationMatrix,
};
use crate::virtual_points::DepthRange;

/// Seed for one purpose: the first eight bytes (little endian) of
/// `SHA-256(seed.to_le_bytes() || tag)`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub mod seed_tags {
    pub const REFERENCE: &str = "reference";
    pub const TEST: &str = "test";
    pub const PIXEL_NOISE: &str = "pixel-noise";
    pub const VCP_DEPTH: &str = "vcp-depth";
    pub const FIELD: &str = "field";
}

/// Centre-anchored planar grid. Feature `id = row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReticleSpec {
    pub rows: u32,
    pub cols: u32,
    pub pitch_m: f64,
}

impl ReticleSpec {
    pub fn new(rows: u32, cols: u32, pitch_m: f64) -> Result<Self> {
        let s = Self { rows, cols, pitch_m };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(CalibError::InvalidParameter(format!(
                "reticle needs at least 2x2 features (got {}x{})",
                self.rows, self.cols
            )));
        }
        if !(self.pitch_m > 0.0 && self.pitch_m.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "reticle pitch must be positive (got {})",
                self.pitch_m
            )));
        }
        Ok(())
    }

    /// Grid whose half-extent subtends `fraction` of the camera's smaller
    /// half field of view.
    pub fn filling(
        rows: u32,
        cols: u32,
        camera: &CameraIntrinsics,
        frame: &ImageFrame,
        fraction: f64,
        collimator_focal_m: f64,
    ) -> Result<Self> {
        let half_w = (f64::from(frame.width) / 2.0 / camera.fx).atan();
        let half_h = (f64::from(frame.height) / 2.0 / camera.fy).atan();
        let half = fraction * half_w.min(half_h);
        let span = f64::from(rows.max(cols) - 1);
        Self::new(rows, cols, 2.0 * collimator_focal_m * half.tan() / span)
    }

    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target(&self, id: u32) -> Option<Vector2<f64>> {
        if id as usize >= self.len() {
            return None;
        }
        let (r, c) = (id / self.cols, id % self.cols);
        Some(Vector2::new(
            (f64::from(c) - f64::from(self.cols - 1) / 2.0) * self.pitch_m,
            (f64::from(r) - f64::from(self.rows - 1) / 2.0) * self.pitch_m,
        ))
    }

    pub fn targets(&self) -> impl Iterator<Item = (u32, Vector2<f64>)> + '_ {
        (0..self.len() as u32).map(|id| (id, self.target(id).expect("id in range")))
    }
}

/// What to do with features that land outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfFramePolicy {
    #[default]
    Reject,
    Drop,
}

/// One camera looking at the reticle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigScenario {
    pub true_camera: CameraModel,
    /// Reticle frame to camera frame.
    pub true_pose: PoseRT,
    pub reticle: ReticleSpec,
    pub frame: ImageFrame,
    pub noise_sigma_px: f64,
    pub seed: u64,
    pub out_of_frame: OutOfFramePolicy,
}

impl RigScenario {
    /// Camera with attitude `attitude` behind a collimator: the reticle is
    /// placed at `attitude * [0, 0, f]`.
    pub fn collimated(
        camera: CameraModel,
        attitude: RotationMatrix,
        reticle: ReticleSpec,
        collimator_focal_m: f64,
        frame: ImageFrame,
        noise_sigma_px: f64,
        seed: u64,
    ) -> Self {
        Self {
            true_camera: camera,
            true_pose: PoseRT::new(attitude, attitude.rotate(&Vector3::new(0.0, 0.0, collimator_focal_m))),
            reticle,
            frame,
            noise_sigma_px,
            seed,
            out_of_frame: OutOfFramePolicy::Reject,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reticle.validate()?;
        self.true_camera.intrinsics.validate()?;
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "noise sigma must be non-negative (got {})",
                self.noise_sigma_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReticleObservation {
    pub planar: Vec<PlanarCorrespondence>,
    /// Ids outside the frame, when the policy drops them.
    pub dropped: Vec<u32>,
}

impl ReticleObservation {
    pub fn pixels(&self) -> Vec<(u32, PixelPoint)> {
        self.planar.iter().map(|p| (p.id, p.pixel)).collect()
    }
}

/// Gaussian pixel noise, one `(du, dv)` pair per feature in id order.
fn noise_stream(seed: u64, sigma: f64) -> impl FnMut() -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, seed_tags::PIXEL_NOISE));
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    move || (normal.sample(&mut rng), normal.sample(&mut rng))
}

/// Projects every reticle feature through the true camera and adds seeded
/// i.i.d. Gaussian noise.
pub fn simulate_reticle_observation(s: &RigScenario) -> Result<ReticleObservation> {
    s.validate()?;
    let mut noise = noise_stream(s.seed, s.noise_sigma_px);
    let (mut planar, mut dropped, mut outside, mut behind) = (vec![], vec![], vec![], vec![]);
    for (id, target) in s.reticle.targets() {
        let (du, dv) = noise();
        let p = Point3::new(target.x, target.y, 0.0);
        let pixel = match s.true_camera.project(&p, &s.true_pose) {
            Ok(px) => PixelPoint::new(px.u + du, px.v + dv),
            Err(_) => {
                behind.push(id);
                continue;
            }
        };
        if !s.frame.contains(&pixel) {
            match s.out_of_frame {
                OutOfFramePolicy::Reject => outside.push(id),
                OutOfFramePolicy::Drop => dropped.push(id),
            }
            continue;
        }
        planar.push(PlanarCorrespondence { id, pixel, target });
    }
    if !behind.is_empty() {
        return Err(CalibError::PointBehindCamera { ids: behind });
    }
    if !outside.is_empty() {
        return Err(CalibError::PointOutsideFrame {
            ids: outside,
            width: s.frame.width,
            height: s.frame.height,
        });
    }
    Ok(ReticleObservation { planar, dropped })
}

/// A camera mounted on the bench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub camera: CameraModel,
    /// Reticle (device reference) frame to camera frame.
    pub attitude: RotationMatrix,
    pub frame: ImageFrame,
    pub noise_sigma_px: f64,
}

/// Reference and test camera behind one collimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchScenario {
    pub reticle: ReticleSpec,
    pub collimator_focal_m: f64,
    pub reference: CameraView,
    pub test: CameraView,
    pub depth_range: DepthRange,
    pub out_of_frame: OutOfFramePolicy,
    pub seed: u64,
}

impl BenchScenario {
    fn rig(&self, view: &CameraView, tag: &str) -> RigScenario {
        let mut rig = RigScenario::collimated(
            view.camera,
            view.attitude,
            self.reticle,
            self.collimator_focal_m,
            view.frame,
            view.noise_sigma_px,
            derive_seed(self.seed, tag),
        );
        rig.out_of_frame = self.out_of_frame;
        rig
    }

    pub fn reference_rig(&self) -> RigScenario {
        self.rig(&self.reference, seed_tags::REFERENCE)
    }

    pub fn test_rig(&self) -> RigScenario {
        self.rig(&self.test, seed_tags::TEST)
    }

    /// Seed of the control-point depths.
    pub fn depth_seed(&self) -> u64 {
        derive_seed(self.seed, seed_tags::VCP_DEPTH)
    }

    /// Reference-camera frame to test-camera frame. Both cameras share the
    /// projection centre, so the translation is zero.
    pub fn true_relative_pose(&self) -> PoseRT {
        PoseRT::new(self.test.attitude * self.reference.attitude.transpose(), Vector3::zeros())
    }

    pub fn validate(&self) -> Result<()> {
        self.depth_range.validate()?;
        if !(self.collimator_focal_m > 0.0 && self.collimator_focal_m.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "collimator focal length must be positive (got {})",
                self.collimator_focal_m
            )));
        }
        self.reference_rig().validate()?;
        self.test_rig().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchObservation {
    pub reference: ReticleObservation,
    pub test: ReticleObservation,
}

/// One image from each camera of the bench. Under [`OutOfFramePolicy::Drop`]
/// both images keep only the features that both cameras see; `dropped` lists
/// what each camera itself lost.
pub fn simulate_bench(b: &BenchScenario) -> Result<BenchObservation> {
    b.validate()?;
    let mut reference = simulate_reticle_observation(&b.reference_rig())?;
    let mut test = simulate_reticle_observation(&b.test_rig())?;
    let common: BTreeSet<u32> = common_ids(&reference.pixels(), &test.pixels()).into_iter().collect();
    reference.planar.retain(|p| common.contains(&p.id));
    test.planar.retain(|p| common.contains(&p.id));
    Ok(BenchObservation { reference, test })
}

/// Datasheet camera: `f = 1000 * focal_mm / pixel_um` pixels, principal point
/// at the frame centre, no distortion.
pub fn build_nominal_intrinsics(
    equiv_focal_mm: f64,
    pixel_size_um: f64,
    width_px: u32,
    height_px: u32,
) -> Result<CameraModel> {
    if !(equiv_focal_mm > 0.0 && pixel_size_um > 0.0) {
        return Err(CalibError::InvalidParameter(format!(
            "focal length and pixel size must be positive (got {equiv_focal_mm} mm, {pixel_size_um} um)"
        )));
    }
    let frame = ImageFrame::new(width_px, height_px)?;
    let f = 1000.0 * equiv_focal_mm / pixel_size_um;
    let c = frame.center();
    Ok(CameraModel::new(
        CameraIntrinsics::new(f, f, c.u, c.v)?,
        DistortionCoefficients::NONE,
    ))
}

/// A distant target seen from the device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScenario {
    /// Device reference frame, meters.
    pub target_position_m: Point3,
    /// Reference frame to camera frame.
    pub true_r_r: RotationMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldObservation {
    pub true_direction: TargetDirection,
    pub pixel: PixelPoint,
}

/// True direction of the target and the (noisy) pixel the camera records.
/// The camera-to-device offset is neglected at field ranges.
pub fn simulate_field_test(
    rig: &RigScenario,
    tgt: &TargetScenario,
    frame_index: u64,
) -> Result<FieldObservation> {
    rig.validate()?;
    let seed = derive_seed(derive_seed(rig.seed, seed_tags::FIELD), &frame_index.to_string());
    observe_target(&rig.true_camera, tgt, rig.noise_sigma_px, seed)
}

/// [`simulate_field_test`] for a bare camera.
pub fn observe_target(
    camera: &CameraModel,
    tgt: &TargetScenario,
    noise_sigma_px: f64,
    seed: u64,
) -> Result<FieldObservation> {
    if !(noise_sigma_px >= 0.0 && noise_sigma_px.is_finite()) {
        return Err(CalibError::InvalidParameter(format!(
            "noise sigma must be non-negative (got {noise_sigma_px})"
        )));
    }
    let pose = PoseRT::new(tgt.true_r_r, Vector3::zeros());
    let ideal = camera.project(&tgt.target_position_m, &pose)?;
    let (du, dv) = noise_stream(seed, noise_sigma_px)();
    Ok(FieldObservation {
        true_direction: TargetDirection::from_vector(&tgt.target_position_m),
        pixel: PixelPoint::new(ideal.u + du, ideal.v + dv),
    })
}

/// Rotation taking local coordinates into a device frame whose boresight
/// points at (`yaw_deg`, `pitch_deg`) with `roll_deg` about it.
pub fn pointing_rotation(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> RotationMatrix {
    RotationMatrix::about_z(roll_deg.to_radians())
        * RotationMatrix::about_x(-pitch_deg.to_radians())
        * RotationMatrix::about_y(-yaw_deg.to_radians())
}

/// Parameter values of the cameras and targets used throughout the examples
/// and the acceptance suite.
pub mod presets {
    use super::*;

    /// High-resolution instrument used as the reference camera.
    pub fn reference_camera() -> CameraModel {
        CameraModel::new(
            CameraIntrinsics { fx: 5967.7, fy: 5969.0, u0: 1222.4, v0: 1023.5 },
            DistortionCoefficients::new(0.2380, 2.0007),
        )
    }

    pub const REFERENCE_FRAME: ImageFrame = ImageFrame { width: 2448, height: 2048 };

    /// Navigation-device camera (12 mm lens, 4.5 um pixels).
    pub fn device_camera() -> CameraModel {
        CameraModel::new(
            CameraIntrinsics { fx: 2677.9, fy: 2678.5, u0: 634.66, v0: 524.12 },
            DistortionCoefficients::new(-0.2011, 0.1989),
        )
    }

    pub const DEVICE_FRAME: ImageFrame = ImageFrame { width: 1280, height: 1024 };

    pub const DEVICE_FOCAL_MM: f64 = 12.0;

    pub const DEVICE_PIXEL_UM: f64 = 4.5;

    /// Mounting attitude of the device camera, degrees.
    pub fn device_attitude() -> EulerAnglesXYZ {
        EulerAnglesXYZ::new(-1.5324, -0.0632, -0.4851)
    }

    /// Local coordinates of the field target, meters.
    pub const FIELD_TARGET_M: [f64; 3] = [1749.8, 19.3, 3671.8];

    pub const COLLIMATOR_FOCAL_M: f64 = 0.55;

    pub const GRID_SIZE: u32 = 15;

    /// Bench with the device camera under test.
    pub fn device_bench(noise_sigma_px: f64, seed: u64) -> BenchScenario {
        let camera = device_camera();
        let reticle = ReticleSpec::filling(
            GRID_SIZE,
            GRID_SIZE,
            &camera.intrinsics,
            &DEVICE_FRAME,
            0.8,
            COLLIMATOR_FOCAL_M,
        )
        .expect("valid preset");
        BenchScenario {
            reticle,
            collimator_focal_m: COLLIMATOR_FOCAL_M,
            reference: CameraView {
                camera: reference_camera(),
                attitude: RotationMatrix::identity(),
                frame: REFERENCE_FRAME,
                noise_sigma_px: 0.0,
            },
            test: CameraView {
                camera,
                attitude: device_attitude().to_matrix(),
                frame: DEVICE_FRAME,
                noise_sigma_px,
            },
            depth_range: DepthRange::default(),
            out_of_frame: OutOfFramePolicy::Reject,
            seed,
        }
    }
}

/// Largest `|k1|` and `|k2|` drawn by [`sample_bench`].
pub const SAMPLED_K1_MAX: f64 = 0.7;
pub const SAMPLED_K2_MAX: f64 = 4.0;

/// `d/dr [r (1 + k1 r^2 + k2 r^4)] > 0` up to radius `r_max`.
pub fn distortion_is_monotone(d: &DistortionCoefficients, r_max: f64) -> bool {
    (0..=100).all(|i| {
        let r2 = (r_max * f64::from(i) / 100.0).powi(2);
        1.0 + 3.0 * d.k1 * r2 + 5.0 * d.k2 * r2 * r2 > 0.0
    })
}

/// Random bench: test camera with `fx` in `[2600, 7600]` px, `|k1| <= 0.7`,
/// `|k2| <= 4`, a principal point within 2% of the centre and an attitude
/// within one degree per axis; the reference is the preset instrument.
pub fn sample_bench(seed: u64, noise_sigma_px: f64) -> BenchScenario {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "scenario"));
    loop {
        let fx = rng.random_range(2600.0..=7600.0);
        let fy = fx * (1.0 + rng.random_range(-0.003..=0.003));
        let frame = if fx < 4500.0 {
            presets::DEVICE_FRAME
        } else {
            presets::REFERENCE_FRAME
        };
        let c = frame.center();
        let u0 = c.u * (1.0 + rng.random_range(-0.02..=0.02));
        let v0 = c.v * (1.0 + rng.random_range(-0.02..=0.02));
        let distortion = DistortionCoefficients::new(
            rng.random_range(-SAMPLED_K1_MAX..=SAMPLED_K1_MAX),
            rng.random_range(-SAMPLED_K2_MAX..=SAMPLED_K2_MAX),
        );
        let intrinsics = CameraIntrinsics { fx, fy, u0, v0 };
        let r_max = f64::from(frame.width).hypot(f64::from(frame.height)) / 2.0 / fx.min(fy);
        let euler = EulerAnglesXYZ::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if !distortion_is_monotone(&distortion, 1.2 * r_max) {
            continue;
        }
        let Ok(reticle) = ReticleSpec::filling(
            presets::GRID_SIZE,
            presets::GRID_SIZE,
            &intrinsics,
            &frame,
            0.75,
            presets::COLLIMATOR_FOCAL_M,
        ) else {
            continue;
        };
        let bench = BenchScenario {
            reticle,
            collimator_focal_m: presets::COLLIMATOR_FOCAL_M,
            reference: CameraView {
                camera: presets::reference_camera(),
                attitude: RotationMatrix::identity(),
                frame: presets::REFERENCE_FRAME,
                noise_sigma_px: 0.0,
            },
            test: CameraView {
                camera: CameraModel::new(intrinsics, distortion),
                attitude: euler.to_matrix(),
                frame,
                noise_sigma_px,
            },
            depth_range: DepthRange::default(),
            out_of_frame: OutOfFramePolicy::Reject,
            seed: derive_seed(seed, "bench"),
        };
        if simulate_bench(&bench).is_ok() {
            return bench;
        }
    }
}

/// Unique ids present in both lists, sorted.
pub fn common_ids(a: &[(u32, PixelPoint)], b: &[(u32, PixelPoint)]) -> Vec<u32> {
    let a: BTreeSet<u32> = a.iter().map(|p| p.0).collect();
    let b: BTreeSet<u32> = b.iter().map(|p| p.0).collect();
    a.intersection(&b).copied().collect()
}
