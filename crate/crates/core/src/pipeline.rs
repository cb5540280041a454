//! End-to-end calibration from one reference image and one test image of the
//! collimated reticle.

use std::collections::{BTreeMap, BTreeSet};

use crate::attitude::{calibrate_attitude, AttitudeResult, PlanarCorrespondence};
use crate::bundle::{refine_camera, RefinedCalibration};
use crate::dlt::{calibrate_single_image, CentralRegion, Correspondence, InitialCalibration};
use crate::error::{CalibError, Result};
use crate::geometry::{CameraModel, ImageFrame, PixelPoint};
use crate::lm::{LmSettings, RobustCost};
use crate::rig::{BenchObservation, BenchScenario};
use crate::virtual_points::{generate_virtual_points, DepthRange, VirtualControlPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalibrationOptions {
    pub depth_range: DepthRange,
    pub depth_seed: u64,
    pub central_fraction: f64,
    pub cost: RobustCost,
    pub lm: LmSettings,
}

impl CameraCalibrationOptions {
    pub fn new(depth_seed: u64) -> Self {
        Self {
            depth_range: DepthRange::default(),
            depth_seed,
            central_fraction: crate::dlt::DEFAULT_CENTRAL_FRACTION,
            cost: RobustCost::default(),
            lm: LmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub control_points: Vec<VirtualControlPoint>,
    pub central_count: usize,
    pub edge_count: usize,
    pub initial: InitialCalibration,
    pub refined: RefinedCalibration,
}

impl CameraCalibration {
    pub fn camera(&self) -> CameraModel {
        CameraModel::new(self.refined.intrinsics, self.refined.distortion)
    }
}

fn check_unique(pixels: &[(u32, PixelPoint)]) -> Result<BTreeMap<u32, PixelPoint>> {
    let mut map = BTreeMap::new();
    for &(id, p) in pixels {
        if map.insert(id, p).is_some() {
            return Err(CalibError::DuplicateId(id));
        }
    }
    Ok(map)
}

/// Pairs control points with test pixels by id. Both sides must carry the
/// same id set.
pub fn match_correspondences(
    control_points: &[VirtualControlPoint],
    test_pixels: &[(u32, PixelPoint)],
) -> Result<Vec<Correspondence>> {
    let test = check_unique(test_pixels)?;
    let reference: BTreeSet<u32> = control_points.iter().map(|p| p.id).collect();
    let missing_in_test: Vec<u32> = reference.iter().filter(|id| !test.contains_key(id)).copied().collect();
    let missing_in_reference: Vec<u32> =
        test.keys().filter(|id| !reference.contains(id)).copied().collect();
    if !missing_in_test.is_empty() || !missing_in_reference.is_empty() {
        return Err(CalibError::IdMismatch {
            missing_in_test,
            missing_in_reference,
        });
    }
    let mut out: Vec<Correspondence> = control_points
        .iter()
        .map(|p| Correspondence {
            id: p.id,
            pixel: test[&p.id],
            point: p.position,
        })
        .collect();
    out.sort_by_key(|c| c.id);
    Ok(out)
}

/// Control points from the reference image, linear initialization on the
/// central region, then bundle adjustment over every point.
pub fn calibrate_camera(
    reference: &CameraModel,
    reference_pixels: &[(u32, PixelPoint)],
    test_pixels: &[(u32, PixelPoint)],
    test_frame: &ImageFrame,
    options: &CameraCalibrationOptions,
) -> Result<CameraCalibration> {
    if !(options.central_fraction > 0.0 && options.central_fraction <= 1.0) {
        return Err(CalibError::InvalidParameter(format!(
            "central fraction must lie in (0, 1] (got {})",
            options.central_fraction
        )));
    }
    let control_points = generate_virtual_points(
        reference,
        reference_pixels,
        &options.depth_range,
        options.depth_seed,
    )?;
    let obs = match_correspondences(&control_points, test_pixels)?;
    let region = CentralRegion::for_frame(test_frame.width, test_frame.height, options.central_fraction);
    let (central, edge) = region.split(&obs);
    let initial = calibrate_single_image(&central, &edge)?;
    let refined = refine_camera(&initial, &obs, &options.cost, &options.lm)?;
    Ok(CameraCalibration {
        control_points,
        central_count: central.len(),
        edge_count: edge.len(),
        initial,
        refined,
    })
}

/// Camera and attitude calibration of a simulated bench, from its own image
/// pair.
pub fn calibrate_bench(
    bench: &BenchScenario,
    obs: &BenchObservation,
    cost: &RobustCost,
    lm: &LmSettings,
) -> Result<(CameraCalibration, AttitudeResult)> {
    let mut options = CameraCalibrationOptions::new(bench.depth_seed());
    options.depth_range = bench.depth_range;
    options.cost = *cost;
    options.lm = *lm;
    let camera = calibrate_camera(
        &bench.reference.camera,
        &obs.reference.pixels(),
        &obs.test.pixels(),
        &bench.test.frame,
        &options,
    )?;
    let attitude = attitude_from_camera(&camera.camera(), &obs.test.planar, lm)?;
    Ok((camera, attitude))
}

pub fn attitude_from_camera(
    camera: &CameraModel,
    planar: &[PlanarCorrespondence],
    lm: &LmSettings,
) -> Result<AttitudeResult> {
    calibrate_attitude(&camera.intrinsics, &camera.distortion, planar, lm)
}
