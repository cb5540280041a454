//! TOML configuration: the simulated bench, the field run and solver knobs.
//! Every key is optional; the defaults describe the 15x15 device bench.

use serde::{Deserialize, Serialize};

use crate::dlt::DEFAULT_CENTRAL_FRACTION;
use crate::field::FieldTestConfig;
use crate::geometry::{
    CameraIntrinsics, CameraModel, DistortionCoefficients, EulerAnglesXYZ, ImageFrame,
};
use crate::lm::LmSettings;
use crate::rig::{presets, BenchScenario, CameraView, OutOfFramePolicy, ReticleSpec};
use crate::virtual_points::DepthRange;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReticleConfig {
    pub rows: u32,
    pub cols: u32,
    /// Meters; when absent the grid fills `fill_fraction` of the test
    /// camera's smaller half field of view.
    pub pitch_m: Option<f64>,
    pub fill_fraction: f64,
}

impl Default for ReticleConfig {
    fn default() -> Self {
        Self {
            rows: presets::GRID_SIZE,
            cols: presets::GRID_SIZE,
            pitch_m: None,
            fill_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
    /// Reticle frame to camera frame, `[theta_x, theta_y, theta_z]` degrees.
    #[serde(default)]
    pub euler_deg: [f64; 3],
    #[serde(default)]
    pub noise_sigma_px: f64,
}

impl CameraConfig {
    fn from_model(m: CameraModel, frame: ImageFrame, euler: [f64; 3], noise: f64) -> Self {
        Self {
            fx: m.intrinsics.fx,
            fy: m.intrinsics.fy,
            u0: m.intrinsics.u0,
            v0: m.intrinsics.v0,
            k1: m.distortion.k1,
            k2: m.distortion.k2,
            width: frame.width,
            height: frame.height,
            euler_deg: euler,
            noise_sigma_px: noise,
        }
    }

    pub fn model(&self) -> CameraModel {
        CameraModel::new(
            CameraIntrinsics {
                fx: self.fx,
                fy: self.fy,
                u0: self.u0,
                v0: self.v0,
            },
            DistortionCoefficients::new(self.k1, self.k2),
        )
    }

    pub fn frame(&self) -> ImageFrame {
        ImageFrame {
            width: self.width,
            height: self.height,
        }
    }

    pub fn euler(&self) -> EulerAnglesXYZ {
        let [x, y, z] = self.euler_deg;
        EulerAnglesXYZ::new(x, y, z)
    }

    fn validate(&self, section: &str) -> Result<(), ConfigError> {
        for (name, v) in [("fx", self.fx), ("fy", self.fy)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(&format!("{section}.{name}"), format!("must be positive (got {v})"));
            }
        }
        for (name, v) in [("u0", self.u0), ("v0", self.v0), ("k1", self.k1), ("k2", self.k2)] {
            if !v.is_finite() {
                return invalid(&format!("{section}.{name}"), "must be finite");
            }
        }
        if self.width == 0 || self.height == 0 {
            return invalid(&format!("{section}.width"), "frame must be non-empty");
        }
        if self.euler_deg.iter().any(|a| !a.is_finite()) {
            return invalid(&format!("{section}.euler_deg"), "must be finite");
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return invalid(
                &format!("{section}.noise_sigma_px"),
                format!("must be non-negative (got {})", self.noise_sigma_px),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub nominal_focal_mm: f64,
    pub nominal_pixel_um: f64,
    pub target_local_m: [f64; 3],
    pub frames: usize,
    pub yaw_jitter_deg: f64,
    pub pitch_jitter_deg: f64,
    pub roll_jitter_deg: f64,
    pub noise_sigma_px: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        let t = FieldTestConfig::default();
        Self {
            nominal_focal_mm: presets::DEVICE_FOCAL_MM,
            nominal_pixel_um: presets::DEVICE_PIXEL_UM,
            target_local_m: t.target_local_m,
            frames: t.frames,
            yaw_jitter_deg: t.yaw_jitter_deg,
            pitch_jitter_deg: t.pitch_jitter_deg,
            roll_jitter_deg: t.roll_jitter_deg,
            noise_sigma_px: t.noise_sigma_px,
        }
    }
}

impl FieldConfig {
    pub fn test_config(&self) -> FieldTestConfig {
        FieldTestConfig {
            target_local_m: self.target_local_m,
            frames: self.frames,
            yaw_jitter_deg: self.yaw_jitter_deg,
            pitch_jitter_deg: self.pitch_jitter_deg,
            roll_jitter_deg: self.roll_jitter_deg,
            noise_sigma_px: self.noise_sigma_px,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("field.nominal_focal_mm", self.nominal_focal_mm),
            ("field.nominal_pixel_um", self.nominal_pixel_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(name, format!("must be positive (got {v})"));
            }
        }
        self.test_config().validate().or_else(|e| {
            let msg = e.to_string();
            let msg = msg.trim_start_matches("invalid parameter: ");
            let (field, message) = msg.split_once(' ').unwrap_or(("field", msg));
            invalid(field, message)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub central_fraction: f64,
    pub min_depth_m: f64,
    pub max_depth_m: f64,
    pub lm: LmSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = DepthRange::default();
        Self {
            central_fraction: DEFAULT_CENTRAL_FRACTION,
            min_depth_m: d.min_m,
            max_depth_m: d.max_m,
            lm: LmSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn depth_range(&self) -> DepthRange {
        DepthRange {
            min_m: self.min_depth_m,
            max_m: self.max_depth_m,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.central_fraction > 0.0 && self.central_fraction <= 1.0) {
            return invalid(
                "solver.central_fraction",
                format!("must lie in (0, 1] (got {})", self.central_fraction),
            );
        }
        if !(self.min_depth_m > 0.0) {
            return invalid("solver.min_depth_m", format!("must be positive (got {})", self.min_depth_m));
        }
        if !(self.max_depth_m > self.min_depth_m && self.max_depth_m.is_finite()) {
            return invalid("solver.max_depth_m", "must be finite and exceed min_depth_m");
        }
        self.lm
            .validate()
            .or_else(|e| invalid("solver.lm", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Used when `--seed` is not given.
    pub seed: Option<u64>,
    pub collimator_focal_m: f64,
    pub out_of_frame: OutOfFramePolicy,
    pub reticle: ReticleConfig,
    pub reference: CameraConfig,
    pub test: CameraConfig,
    pub field: FieldConfig,
    pub solver: SolverConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            collimator_focal_m: presets::COLLIMATOR_FOCAL_M,
            out_of_frame: OutOfFramePolicy::Reject,
            reticle: ReticleConfig::default(),
            reference: CameraConfig::from_model(
                presets::reference_camera(),
                presets::REFERENCE_FRAME,
                [0.0; 3],
                0.0,
            ),
            test: CameraConfig::from_model(
                presets::device_camera(),
                presets::DEVICE_FRAME,
                presets::device_attitude().as_array(),
                0.1,
            ),
            field: FieldConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Config {
    /// Parses and validates. Keys left out keep their values from
    /// [`Config::default`], section by section. Syntax errors carry the line
    /// and column.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c = match toml::from_str::<Config>(text) {
            Ok(c) => c,
            // partial camera sections are filled in from the defaults
            Err(e) if e.message().starts_with("missing field") => {
                let user: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
                let mut merged: toml::Table =
                    toml::from_str(&Config::default().to_toml()).expect("default config parses");
                merge(&mut merged, user);
                Config::deserialize(toml::Value::Table(merged))
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            Err(e) => return Err(ConfigError::Parse(e.to_string())),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reticle.rows < 2 {
            return invalid("reticle.rows", format!("must be at least 2 (got {})", self.reticle.rows));
        }
        if self.reticle.cols < 2 {
            return invalid("reticle.cols", format!("must be at least 2 (got {})", self.reticle.cols));
        }
        if let Some(p) = self.reticle.pitch_m {
            if !(p > 0.0 && p.is_finite()) {
                return invalid("reticle.pitch_m", format!("must be positive (got {p})"));
            }
        }
        if !(self.reticle.fill_fraction > 0.0 && self.reticle.fill_fraction < 1.0) {
            return invalid(
                "reticle.fill_fraction",
                format!("must lie in (0, 1) (got {})", self.reticle.fill_fraction),
            );
        }
        if !(self.collimator_focal_m > 0.0 && self.collimator_focal_m.is_finite()) {
            return invalid(
                "collimator_focal_m",
                format!("must be positive (got {})", self.collimator_focal_m),
            );
        }
        self.reference.validate("reference")?;
        self.test.validate("test")?;
        self.field.validate()?;
        self.solver.validate()
    }

    pub fn reticle_spec(&self) -> ReticleSpec {
        let r = &self.reticle;
        match r.pitch_m {
            Some(pitch_m) => ReticleSpec {
                rows: r.rows,
                cols: r.cols,
                pitch_m,
            },
            None => ReticleSpec::filling(
                r.rows,
                r.cols,
                &self.test.model().intrinsics,
                &self.test.frame(),
                r.fill_fraction,
                self.collimator_focal_m,
            )
            .expect("validated config"),
        }
    }

    pub fn bench(&self, seed: u64) -> BenchScenario {
        let view = |c: &CameraConfig| CameraView {
            camera: c.model(),
            attitude: c.euler().to_matrix(),
            frame: c.frame(),
            noise_sigma_px: c.noise_sigma_px,
        };
        BenchScenario {
            reticle: self.reticle_spec(),
            collimator_focal_m: self.collimator_focal_m,
            reference: view(&self.reference),
            test: view(&self.test),
            depth_range: self.solver.depth_range(),
            out_of_frame: self.out_of_frame,
            seed,
        }
    }
}
