//! Attitude of a calibrated camera from one image of the reticle.

use collimcal::attitude::calibrate_attitude;
use collimcal::geometry::matrix_to_euler_xyz;
use collimcal::lm::LmSettings;
use collimcal::rig::{presets, simulate_reticle_observation};

fn main() -> collimcal::Result<()> {
    let bench = presets::device_bench(0.1, 4);
    let obs = simulate_reticle_observation(&bench.test_rig())?;
    let cam = presets::device_camera();
    let a = calibrate_attitude(&cam.intrinsics, &cam.distortion, &obs.planar, &LmSettings::default())?;
    let truth = presets::device_attitude();
    let e = matrix_to_euler_xyz(&a.r_r)?;
    println!("{:>8} {:>12} {:>12}", "axis", "recovered", "truth");
    for (name, x, t) in [
        ("theta_x", e.theta_x, truth.theta_x),
        ("theta_y", e.theta_y, truth.theta_y),
        ("theta_z", e.theta_z, truth.theta_z),
    ] {
        println!("{name:>8} {x:>12.5} {t:>12.5}");
    }
    println!("rms {:.4} px over {} points", a.rms_px, obs.planar.len());
    Ok(())
}
