//! The `collimcal` command line: argument parsing, file plumbing and exit
//! codes. The binary is a thin wrapper around [`run_with_args`].
//!
//! With `--trace`, every solver iteration is written to stderr as one line:
//!
//! ```text
//! camera: lm iter=3 cost=1.2e1 trial_cost=1.1e1 damping=1e-4 step=2.5e-3 accepted=true
//! ```
//!
//! followed by `<label>: termination <Reason>`. Labels are `camera` and
//! `attitude`. Exit codes are listed in [`exit_code`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CalibError;
use crate::field::{evaluate_field, FieldTruth};
use crate::geometry::CameraModel;
use crate::io::config::{Config, ConfigError};
use crate::io::dataset::{CameraRole, Columns, DatasetError, DatasetFile, DatasetRecord};
use crate::io::report::{
    to_toml, AttitudeReport, CameraReport, CameraSection, ControlPointSection, EvaluationReport,
    FieldScenarioFile, NominalSection, PoseSection, ReportHeader, SettingsSection, TruthSidecar,
    REPORT_FORMAT, REPORT_VERSION,
};
use crate::io::sha256_hex;
use crate::lm::{LmReport, RobustCost};
use crate::pipeline::{attitude_from_camera, calibrate_camera, CameraCalibrationOptions};
use crate::rig::{build_nominal_intrinsics, derive_seed, seed_tags, simulate_bench};
use crate::virtual_points::DEPTH_RNG;

pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    /// Bad flags or configuration.
    pub const USAGE: i32 = 2;
    /// Unreadable or malformed dataset or report.
    pub const DATASET: i32 = 3;
    /// Feature ids differ between files.
    pub const MATCH: i32 = 4;
    /// Too few points or a degenerate configuration.
    pub const INSUFFICIENT: i32 = 5;
    /// A solver failed to converge.
    pub const CONVERGENCE: i32 = 6;
}

pub const REFERENCE_DATASET: &str = "reference.dataset";
pub const TEST_DATASET: &str = "test.dataset";
pub const TRUTH_FILE: &str = "truth.toml";
pub const FIELD_FILE: &str = "field.toml";
pub const CAMERA_REPORT: &str = "camera.toml";
pub const ATTITUDE_REPORT: &str = "attitude.toml";
pub const EVALUATION_REPORT: &str = "evaluation.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    Squared,
    Huber,
}

#[derive(Debug, Parser)]
#[command(
    name = "collimcal",
    version,
    about = "Single-image camera and attitude calibration against a collimated reticle"
)]
pub struct Cli {
    /// Seed for every random draw (required by calibrate-camera and evaluate).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML configuration (bench, field run, solver settings).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory for written files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub output: PathBuf,

    /// Loss on each point's reprojection error during camera calibration.
    #[arg(long, global = true, value_enum, default_value_t = CostArg::Huber)]
    pub cost: CostArg,

    /// Huber threshold in pixels.
    #[arg(long, global = true, value_name = "PX", default_value_t = 1.0, allow_negative_numbers = true)]
    pub huber_delta: f64,

    /// Print every solver iteration to stderr.
    #[arg(long, global = true)]
    pub trace: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one reference and one test image of the reticle.
    Simulate,
    /// Recover intrinsics, distortion and pose of the test camera.
    CalibrateCamera {
        reference: PathBuf,
        test: PathBuf,
        /// Camera report holding the reference camera's parameters, when the
        /// reference dataset has no `camera` line.
        #[arg(long, value_name = "PATH")]
        reference_camera: Option<PathBuf>,
    },
    /// Recover the camera attitude relative to the device reference frame.
    CalibrateAttitude { test: PathBuf, camera_report: PathBuf },
    /// Compare target directions from nominal and calibrated parameters.
    Evaluate {
        attitude_report: PathBuf,
        camera_report: PathBuf,
        field_scenario: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(ConfigError),
    #[error("scenario: {0}")]
    Scenario(CalibError),
    #[error("{path}: {source}")]
    Dataset { path: String, source: DatasetError },
    #[error("{path}: {message}")]
    Report { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Calib(#[from] CalibError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use exit_code::*;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Scenario(_) => USAGE,
            CliError::Dataset { .. } | CliError::Report { .. } => DATASET,
            CliError::Io { .. } => OTHER,
            CliError::Calib(e) => match e {
                CalibError::IdMismatch { .. } | CalibError::DuplicateId(_) => MATCH,
                CalibError::InsufficientPoints { .. }
                | CalibError::DegenerateConfiguration(_)
                | CalibError::RankDeficient
                | CalibError::InvalidMatrix(_)
                | CalibError::EmptyInput => INSUFFICIENT,
                CalibError::NotConverged { .. }
                | CalibError::DivergedBehindCamera
                | CalibError::NonConvergence { .. } => CONVERGENCE,
                _ => OTHER,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: display(path),
        source,
    })
}

fn read_text(path: &Path) -> CliResult<(String, String)> {
    let bytes = read_bytes(path)?;
    let digest = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| CliError::Report {
        path: display(path),
        message: "not UTF-8 text".into(),
    })?;
    Ok((text, digest))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: display(dir),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io {
        path: display(&path),
        source,
    })?;
    Ok(path)
}

fn load_dataset(path: &Path, role: CameraRole) -> CliResult<(DatasetFile, String)> {
    let (text, digest) = read_text(path)?;
    let ds: DatasetFile = text.parse().map_err(|source| CliError::Dataset {
        path: display(path),
        source,
    })?;
    if ds.role != role {
        return Err(CliError::Dataset {
            path: display(path),
            source: DatasetError {
                line: 2,
                message: format!("expected role {}, found {}", role.as_str(), ds.role.as_str()),
            },
        });
    }
    Ok((ds, digest))
}

fn load_report<T: serde::de::DeserializeOwned>(path: &Path, kind: &str) -> CliResult<(T, String)> {
    let (text, digest) = read_text(path)?;
    let bad = |message: String| CliError::Report {
        path: display(path),
        message,
    };
    let head: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let field = |k: &str| head.get(k).and_then(|v| v.as_str()).unwrap_or("");
    if field("format") != REPORT_FORMAT {
        return Err(bad(format!("not a {REPORT_FORMAT} file")));
    }
    if head.get("version").and_then(|v| v.as_integer()) != Some(i64::from(REPORT_VERSION)) {
        return Err(bad("unsupported report version".into()));
    }
    if field("kind") != kind {
        return Err(bad(format!("expected a {kind} report, found '{}'", field("kind"))));
    }
    let value = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    Ok((value, digest))
}

fn load_config(cli: &Cli) -> CliResult<(Config, Option<String>)> {
    match &cli.config {
        None => Ok((Config::default(), None)),
        Some(path) => {
            let (text, digest) = read_text(path)?;
            Ok((Config::from_toml(&text).map_err(CliError::Config)?, Some(digest)))
        }
    }
}

fn cost(cli: &Cli) -> CliResult<RobustCost> {
    match cli.cost {
        CostArg::Squared => Ok(RobustCost::Squared),
        CostArg::Huber => RobustCost::huber(cli.huber_delta)
            .map_err(|_| CliError::Usage(format!("--huber-delta must be positive (got {})", cli.huber_delta))),
    }
}

fn require_seed(cli: &Cli, cmd: &str) -> CliResult<u64> {
    cli.seed
        .ok_or_else(|| CliError::Usage(format!("{cmd} requires --seed <u64>")))
}

fn trace(cli: &Cli, err: &mut dyn Write, label: &str, report: &LmReport) {
    if cli.trace {
        for it in &report.trace {
            let _ = writeln!(err, "{label}: {it}");
        }
        let _ = writeln!(err, "{label}: termination {:?}", report.termination);
    }
}

fn simulate(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let (config, _) = load_config(cli)?;
    let seed = cli.seed.or(config.seed).ok_or_else(|| {
        CliError::Usage("simulate requires --seed <u64> or a `seed` key in the config".into())
    })?;
    let mut resolved = config.clone();
    resolved.seed = Some(seed);
    let scenario_sha256 = sha256_hex(resolved.to_toml().as_bytes());
    let bench = config.bench(seed);
    let obs = simulate_bench(&bench).map_err(CliError::Scenario)?;

    let reference = DatasetFile {
        role: CameraRole::Reference,
        frame: bench.reference.frame,
        seed: Some(seed),
        scenario_sha256: Some(scenario_sha256.clone()),
        camera: Some(bench.reference.camera),
        columns: Columns::Pixel,
        records: obs
            .reference
            .planar
            .iter()
            .map(|p| DatasetRecord {
                id: p.id,
                pixel: p.pixel,
                point: None,
                target: None,
            })
            .collect(),
    };
    let test = DatasetFile {
        role: CameraRole::Test,
        frame: bench.test.frame,
        seed: Some(seed),
        scenario_sha256: Some(scenario_sha256),
        camera: None,
        columns: Columns::Target,
        records: obs
            .test
            .planar
            .iter()
            .map(|p| DatasetRecord {
                id: p.id,
                pixel: p.pixel,
                point: None,
                target: Some(p.target),
            })
            .collect(),
    };
    let truth = TruthSidecar {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        kind: "truth".into(),
        seed,
        test_camera: CameraSection::new(&bench.test.camera.intrinsics, &bench.test.camera.distortion),
        test_attitude: PoseSection::new(&bench.test_rig().true_pose)?,
        relative_pose: PoseSection::new(&bench.true_relative_pose())?,
        reference_camera: CameraSection::new(
            &bench.reference.camera.intrinsics,
            &bench.reference.camera.distortion,
        ),
        reticle: bench.reticle,
        dropped_reference: obs.reference.dropped.clone(),
        dropped_test: obs.test.dropped.clone(),
    };
    let field = FieldScenarioFile {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        kind: "field-scenario".into(),
        frame: bench.test.frame,
        true_camera: truth.test_camera,
        true_euler_deg: config.test.euler(),
        nominal_focal_mm: config.field.nominal_focal_mm,
        nominal_pixel_um: config.field.nominal_pixel_um,
        field: config.field.test_config(),
    };
    for (name, text) in [
        (REFERENCE_DATASET, reference.to_text()),
        (TEST_DATASET, test.to_text()),
        (TRUTH_FILE, to_toml(&truth)),
        (FIELD_FILE, to_toml(&field)),
    ] {
        let path = write_file(&cli.output, name, &text)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn calibrate_camera_cmd(
    cli: &Cli,
    reference_path: &Path,
    test_path: &Path,
    reference_camera: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let seed = require_seed(cli, "calibrate-camera")?;
    let cost = cost(cli)?;
    let (config, config_digest) = load_config(cli)?;
    let (reference, ref_digest) = load_dataset(reference_path, CameraRole::Reference)?;
    let (test, test_digest) = load_dataset(test_path, CameraRole::Test)?;
    let mut inputs = BTreeMap::from([
        ("reference".to_string(), ref_digest),
        ("test".to_string(), test_digest),
    ]);
    if let Some(d) = config_digest {
        inputs.insert("config".into(), d);
    }
    let reference_model: CameraModel = match (reference_camera, reference.camera) {
        (Some(path), _) => {
            let (report, digest) = load_report::<CameraReport>(path, "camera")?;
            inputs.insert("reference_camera".into(), digest);
            report.camera.model()?
        }
        (None, Some(m)) => m,
        (None, None) => {
            return Err(CliError::Dataset {
                path: display(reference_path),
                source: DatasetError {
                    line: 0,
                    message: "no 'camera' line and no --reference-camera given".into(),
                },
            })
        }
    };

    let mut options = CameraCalibrationOptions::new(derive_seed(seed, seed_tags::VCP_DEPTH));
    options.depth_range = config.solver.depth_range();
    options.central_fraction = config.solver.central_fraction;
    options.cost = cost;
    options.lm = config.solver.lm;
    let cal = calibrate_camera(
        &reference_model,
        &reference.pixels(),
        &test.pixels(),
        &test.frame,
        &options,
    )?;
    trace(cli, err, "camera", &cal.refined.report);

    let report = CameraReport::new(
        ReportHeader::new("camera", Some(seed), inputs),
        test.frame,
        SettingsSection {
            cost,
            lm: options.lm,
        },
        ControlPointSection {
            count: cal.control_points.len(),
            central: cal.central_count,
            edge: cal.edge_count,
            central_fraction: options.central_fraction,
            min_depth_m: options.depth_range.min_m,
            max_depth_m: options.depth_range.max_m,
            depth_seed: options.depth_seed,
            depth_rng: DEPTH_RNG.into(),
        },
        &cal,
    )?;
    let path = write_file(&cli.output, CAMERA_REPORT, &to_toml(&report))?;
    let c = report.camera;
    let _ = writeln!(
        out,
        "fx {} fy {} u0 {} v0 {} k1 {} k2 {}\nrms {:.6} px  max {:.6} px  ({} points)\nwrote {}",
        c.fx,
        c.fy,
        c.u0,
        c.v0,
        c.k1,
        c.k2,
        report.residuals.rms_px,
        report.residuals.max_px,
        report.residuals.points,
        path.display()
    );
    Ok(())
}

fn calibrate_attitude_cmd(
    cli: &Cli,
    test_path: &Path,
    camera_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let (config, config_digest) = load_config(cli)?;
    let (test, test_digest) = load_dataset(test_path, CameraRole::Test)?;
    let (camera_report, camera_digest) = load_report::<CameraReport>(camera_path, "camera")?;
    let mut inputs = BTreeMap::from([
        ("test".to_string(), test_digest),
        ("camera_report".to_string(), camera_digest),
    ]);
    if let Some(d) = config_digest {
        inputs.insert("config".into(), d);
    }
    let planar = test.planar().ok_or_else(|| CliError::Dataset {
        path: display(test_path),
        source: DatasetError {
            line: 0,
            message: "attitude needs reticle coordinates ('columns id u v xt yt')".into(),
        },
    })?;
    let camera = camera_report.camera.model()?;
    let att = attitude_from_camera(&camera, &planar, &config.solver.lm)?;
    trace(cli, err, "attitude", &att.report);

    let report = AttitudeReport::new(
        ReportHeader::new("attitude", cli.seed, inputs),
        config.solver.lm,
        &camera,
        &att,
    );
    let path = write_file(&cli.output, ATTITUDE_REPORT, &to_toml(&report))?;
    let e = att.euler;
    let _ = writeln!(
        out,
        "theta_x {} deg  theta_y {} deg  theta_z {} deg\nrms {:.6} px\nwrote {}",
        e.theta_x,
        e.theta_y,
        e.theta_z,
        att.rms_px,
        path.display()
    );
    Ok(())
}

fn evaluate_cmd(
    cli: &Cli,
    attitude_path: &Path,
    camera_path: &Path,
    field_path: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let seed = require_seed(cli, "evaluate")?;
    let (attitude, attitude_digest) = load_report::<AttitudeReport>(attitude_path, "attitude")?;
    let (camera, camera_digest) = load_report::<CameraReport>(camera_path, "camera")?;
    let (scenario, field_digest) = load_report::<FieldScenarioFile>(field_path, "field-scenario")?;
    let inputs = BTreeMap::from([
        ("attitude_report".to_string(), attitude_digest),
        ("camera_report".to_string(), camera_digest),
        ("field_scenario".to_string(), field_digest),
    ]);
    let scenario_error = |e: CalibError| CliError::Report {
        path: display(field_path),
        message: e.to_string(),
    };
    let nominal = build_nominal_intrinsics(
        scenario.nominal_focal_mm,
        scenario.nominal_pixel_um,
        scenario.frame.width,
        scenario.frame.height,
    )
    .map_err(scenario_error)?;
    let truth = FieldTruth {
        camera: scenario.true_camera.model().map_err(scenario_error)?,
        r_r: scenario.true_euler_deg.to_matrix(),
        frame: scenario.frame,
    };
    let calibrated = camera.camera.model()?;
    let ev = evaluate_field(
        &truth,
        &nominal,
        &calibrated,
        &attitude.r_r()?,
        &scenario.field,
        derive_seed(seed, seed_tags::FIELD),
    )
    .map_err(scenario_error)?;
    let report = EvaluationReport::new(
        ReportHeader::new("evaluation", Some(seed), inputs),
        scenario.field,
        NominalSection {
            focal_mm: scenario.nominal_focal_mm,
            pixel_um: scenario.nominal_pixel_um,
            camera: CameraSection::new(&nominal.intrinsics, &nominal.distortion),
        },
        &calibrated,
        &ev,
    );
    let path = write_file(&cli.output, EVALUATION_REPORT, &to_toml(&report))?;
    let _ = write!(out, "{}wrote {}\n", report.table(), path.display());
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Simulate => simulate(cli, out),
        Command::CalibrateCamera {
            reference,
            test,
            reference_camera,
        } => calibrate_camera_cmd(cli, reference, test, reference_camera.as_deref(), out, err),
        Command::CalibrateAttitude {
            test,
            camera_report,
        } => calibrate_attitude_cmd(cli, test, camera_report, out, err),
        Command::Evaluate {
            attitude_report,
            camera_report,
            field_scenario,
        } => evaluate_cmd(cli, attitude_report, camera_report, field_scenario, out),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit_code::USAGE } else { exit_code::SUCCESS };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(()) => exit_code::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
