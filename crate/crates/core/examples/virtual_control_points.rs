//! Lifts reference-camera pixels to 3-D control points at seeded depths.

use collimcal::rig::{presets, simulate_bench};
use collimcal::virtual_points::{generate_virtual_points, DepthRange};

fn main() -> collimcal::Result<()> {
    let bench = presets::device_bench(0.0, 1);
    let obs = simulate_bench(&bench)?;
    let vcps = generate_virtual_points(
        &bench.reference.camera,
        &obs.reference.pixels(),
        &DepthRange::default(),
        bench.depth_seed(),
    )?;
    println!("{} control points", vcps.len());
    for p in vcps.iter().step_by(56) {
        println!(
            "id {:>3}  pixel ({:>8.2}, {:>8.2})  point ({:>9.3}, {:>9.3}, {:>8.3}) m",
            p.id, p.source_pixel.u, p.source_pixel.v, p.position.x, p.position.y, p.position.z
        );
    }
    Ok(())
}
