//! Simulate a bench pair, write it as datasets, read it back and calibrate.

use collimcal::io::dataset::{CameraRole, Columns, DatasetFile, DatasetRecord};
use collimcal::lm::{LmSettings, RobustCost};
use collimcal::pipeline::{attitude_from_camera, calibrate_camera, CameraCalibrationOptions};
use collimcal::rig::{presets, simulate_bench};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bench = presets::device_bench(0.1, 6);
    let obs = simulate_bench(&bench)?;
    let test = DatasetFile {
        role: CameraRole::Test,
        frame: bench.test.frame,
        seed: Some(bench.seed),
        scenario_sha256: None,
        camera: None,
        columns: Columns::Target,
        records: obs
            .test
            .planar
            .iter()
            .map(|p| DatasetRecord { id: p.id, pixel: p.pixel, point: None, target: Some(p.target) })
            .collect(),
    };
    let text = test.to_text();
    println!("{}", text.lines().take(9).collect::<Vec<_>>().join("\n"));
    println!("...");
    let test: DatasetFile = text.parse()?;

    let mut options = CameraCalibrationOptions::new(bench.depth_seed());
    options.cost = RobustCost::default();
    let cal = calibrate_camera(
        &bench.reference.camera,
        &obs.reference.pixels(),
        &test.pixels(),
        &test.frame,
        &options,
    )?;
    let att = attitude_from_camera(&cal.camera(), &test.planar().unwrap(), &LmSettings::default())?;
    let k = cal.refined.intrinsics;
    println!("camera   fx {:.3} fy {:.3} u0 {:.3} v0 {:.3}  rms {:.4} px", k.fx, k.fy, k.u0, k.v0, cal.refined.rms_reprojection_px);
    println!("attitude {:?} deg", att.euler.as_array());
    Ok(())
}
