//! Yaw/pitch of a distant target from nominal and calibrated parameters.

use collimcal::field::{evaluate_field, FieldTestConfig, FieldTruth};
use collimcal::lm::{LmSettings, RobustCost};
use collimcal::pipeline::calibrate_bench;
use collimcal::rig::{build_nominal_intrinsics, derive_seed, presets, seed_tags, simulate_bench};

fn main() -> collimcal::Result<()> {
    let seed = 5;
    let bench = presets::device_bench(0.1, seed);
    let obs = simulate_bench(&bench)?;
    let (cam, att) = calibrate_bench(&bench, &obs, &RobustCost::default(), &LmSettings::default())?;
    let nominal = build_nominal_intrinsics(
        presets::DEVICE_FOCAL_MM,
        presets::DEVICE_PIXEL_UM,
        presets::DEVICE_FRAME.width,
        presets::DEVICE_FRAME.height,
    )?;
    let truth = FieldTruth {
        camera: presets::device_camera(),
        r_r: presets::device_attitude().to_matrix(),
        frame: presets::DEVICE_FRAME,
    };
    let ev = evaluate_field(
        &truth,
        &nominal,
        &cam.camera(),
        &att.r_r,
        &FieldTestConfig::default(),
        derive_seed(seed, seed_tags::FIELD),
    )?;
    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "frame", "yaw", "pitch", "nom_yaw", "nom_pit", "cal_yaw", "cal_pit");
    for f in ev.frames.iter().take(8) {
        println!(
            "{:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            f.index, f.truth.yaw_deg, f.truth.pitch_deg, f.nominal.yaw_deg, f.nominal.pitch_deg,
            f.calibrated.yaw_deg, f.calibrated.pitch_deg
        );
    }
    for (name, g) in [("nominal", &ev.nominal), ("calibrated", &ev.calibrated)] {
        println!(
            "{name:>10}  yaw {:.4}/{:.4}  pitch {:.4}/{:.4}  (mean/std deg)",
            g.yaw.mean_abs_deg, g.yaw.std_abs_deg, g.pitch.mean_abs_deg, g.pitch.std_abs_deg
        );
    }
    println!("reduction {:.1}%", 100.0 * ev.reduction);
    Ok(())
}
