//! Radial distortion of a few pixels across the frame and its inversion.

use collimcal::geometry::{distort, undistort, PixelPoint};
use collimcal::rig::presets;

fn main() -> collimcal::Result<()> {
    let cam = presets::device_camera();
    let (k, d) = (cam.intrinsics, cam.distortion);
    println!("k1 {}  k2 {}", d.k1, d.k2);
    println!("{:>8} {:>8} {:>12} {:>12} {:>10}", "u", "v", "ideal u", "ideal v", "error px");
    for (u, v) in [(640.0, 512.0), (900.0, 700.0), (1200.0, 80.0), (20.0, 1000.0), (0.0, 0.0)] {
        let observed = PixelPoint::new(u, v);
        let ideal = undistort(observed, &k, &d)?;
        let err = distort(ideal, &k, &d).distance(&observed);
        println!("{u:>8.1} {v:>8.1} {:>12.4} {:>12.4} {err:>10.2e}", ideal.u, ideal.v);
    }
    Ok(())
}
