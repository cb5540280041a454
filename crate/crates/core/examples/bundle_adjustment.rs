//! Nonlinear refinement of all camera parameters, squared and Huber losses,
//! with one observation pushed 8 px off.

use collimcal::dlt::{calibrate_single_image, CentralRegion, DEFAULT_CENTRAL_FRACTION};
use collimcal::bundle::refine_camera;
use collimcal::lm::{LmSettings, RobustCost};
use collimcal::pipeline::match_correspondences;
use collimcal::rig::{presets, simulate_bench};
use collimcal::virtual_points::{generate_virtual_points, DepthRange};

fn main() -> collimcal::Result<()> {
    let bench = presets::device_bench(0.1, 3);
    let obs = simulate_bench(&bench)?;
    let vcps = generate_virtual_points(
        &bench.reference.camera,
        &obs.reference.pixels(),
        &DepthRange::default(),
        bench.depth_seed(),
    )?;
    let mut matched = match_correspondences(&vcps, &obs.test.pixels())?;
    matched[40].pixel.u += 8.0;
    let frame = bench.test.frame;
    let (central, edge) =
        CentralRegion::for_frame(frame.width, frame.height, DEFAULT_CENTRAL_FRACTION).split(&matched);
    let init = calibrate_single_image(&central, &edge)?;

    for cost in [RobustCost::Squared, RobustCost::default()] {
        let r = refine_camera(&init, &matched, &cost, &LmSettings::default())?;
        println!("{cost}");
        println!(
            "  fx {:.3} fy {:.3} u0 {:.3} v0 {:.3} k1 {:.4} k2 {:.4}",
            r.intrinsics.fx, r.intrinsics.fy, r.intrinsics.u0, r.intrinsics.v0, r.distortion.k1, r.distortion.k2
        );
        println!(
            "  rms {:.4} px  max {:.4} px  {} iterations ({:?})",
            r.rms_reprojection_px, r.max_reprojection_px, r.report.iterations, r.report.termination
        );
        for it in r.report.trace.iter().take(3) {
            println!("    {it}");
        }
    }
    Ok(())
}
