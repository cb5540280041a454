//! Axis-angle, rotation matrix and XYZ Euler conversions.

use collimcal::geometry::{
    axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_euler_xyz, AxisAngle, EulerAnglesXYZ,
};

fn main() -> collimcal::Result<()> {
    let r = AxisAngle::new(0.02, -0.01, 0.3);
    let m = axis_angle_to_matrix(&r);
    println!("axis-angle {:?}", r.vector().as_slice());
    for row in m.to_rows() {
        println!("  {:>12.9} {:>12.9} {:>12.9}", row[0], row[1], row[2]);
    }
    let back = matrix_to_axis_angle(&m)?;
    println!("round trip error {:.2e}", (back.0 - r.0).norm());

    let e = EulerAnglesXYZ::new(-1.5324, -0.0632, -0.4851);
    let recovered = matrix_to_euler_xyz(&e.to_matrix())?;
    println!(
        "euler deg {:?} -> {:?}",
        e.as_array(),
        recovered.as_array()
    );
    Ok(())
}
