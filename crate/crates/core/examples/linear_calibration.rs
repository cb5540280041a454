//! Closed-form camera estimate from virtual control points: projection
//! matrix from the central region, then distortion from all points.

use collimcal::dlt::{calibrate_single_image, CentralRegion, Correspondence, DEFAULT_CENTRAL_FRACTION};
use collimcal::pipeline::match_correspondences;
use collimcal::rig::{presets, simulate_bench};
use collimcal::virtual_points::{generate_virtual_points, DepthRange};

fn main() -> collimcal::Result<()> {
    let bench = presets::device_bench(0.1, 2);
    let obs = simulate_bench(&bench)?;
    let vcps = generate_virtual_points(
        &bench.reference.camera,
        &obs.reference.pixels(),
        &DepthRange::default(),
        bench.depth_seed(),
    )?;
    let matched: Vec<Correspondence> = match_correspondences(&vcps, &obs.test.pixels())?;
    let frame = bench.test.frame;
    let (central, edge) =
        CentralRegion::for_frame(frame.width, frame.height, DEFAULT_CENTRAL_FRACTION).split(&matched);
    let init = calibrate_single_image(&central, &edge)?;
    let (k, d) = (init.intrinsics, init.distortion);
    let t = bench.test.camera;
    println!("{} central, {} edge points", central.len(), edge.len());
    println!("          estimate      truth");
    for (name, a, b) in [
        ("fx", k.fx, t.intrinsics.fx),
        ("fy", k.fy, t.intrinsics.fy),
        ("u0", k.u0, t.intrinsics.u0),
        ("v0", k.v0, t.intrinsics.v0),
        ("k1", d.k1, t.distortion.k1),
        ("k2", d.k2, t.distortion.k2),
    ] {
        println!("{name:>4} {a:>14.4} {b:>10.4}");
    }
    Ok(())
}
