//! Virtual control points: a calibrated reference camera's view of the
//! collimated reticle, lifted to 3-D by scaling each feature ray with a
//! random depth.
//!
//! The depth for feature `id` is drawn from ChaCha20 seeded with `seed` on
//! stream `id`, so it does not depend on which other features are present or
//! on their order.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::geometry::{
    pixel_to_ray, undistort, CameraModel, PixelPoint, Point3,
};

/// Name of the depth generator, recorded in reports.
pub const DEPTH_RNG: &str = "ChaCha20 (rand_chacha 0.9), stream = feature id, uniform f64 in [min, max]";

/// The calibrated instrument whose rays seed the control points.
pub type ReferenceCamera = CameraModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min_m: f64,
    pub max_m: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self {
            min_m: 100.0,
            max_m: 1000.0,
        }
    }
}

impl DepthRange {
    pub fn new(min_m: f64, max_m: f64) -> Result<Self> {
        let r = Self { min_m, max_m };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_m > 0.0 && self.min_m < self.max_m && self.max_m.is_finite() {
            Ok(())
        } else {
            Err(CalibError::InvalidParameter(format!(
                "depth range must satisfy 0 < min < max (got {} .. {})",
                self.min_m, self.max_m
            )))
        }
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.min_m && z <= self.max_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualControlPoint {
    pub id: u32,
    /// Reference-camera frame, meters.
    pub position: Point3,
    pub source_pixel: PixelPoint,
}

/// Depth assigned to feature `id` under `seed`.
pub fn draw_depth(seed: u64, id: u32, range: &DepthRange) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(id));
    rng.random_range(range.min_m..=range.max_m)
}

pub fn generate_virtual_points(
    reference: &ReferenceCamera,
    observations: &[(u32, PixelPoint)],
    range: &DepthRange,
    seed: u64,
) -> Result<Vec<VirtualControlPoint>> {
    if observations.is_empty() {
        return Err(CalibError::EmptyInput);
    }
    range.validate()?;
    reference.intrinsics.validate()?;
    let mut seen = BTreeSet::new();
    for (id, _) in observations {
        if !seen.insert(*id) {
            return Err(CalibError::DuplicateId(*id));
        }
    }

    observations
        .iter()
        .map(|&(id, pixel)| {
            let ideal = undistort(pixel, &reference.intrinsics, &reference.distortion)?;
            let ray = pixel_to_ray(ideal, &reference.intrinsics).ray();
            let depth = draw_depth(seed, id, range);
            Ok(VirtualControlPoint {
                id,
                position: ray * depth,
                source_pixel: pixel,
            })
        })
        .collect()
}
