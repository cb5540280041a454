use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use proptest::prelude::*;

use collimcal::attitude::{
    decompose_homography, estimate_homography, Homography, PlanarCorrespondence, PoseProblem,
};
use collimcal::bundle::{refine_camera, reprojection_stats, CameraProblem};
use collimcal::dlt::{decompose_projection, Correspondence, InitialCalibration, ProjectionMatrix};
use collimcal::geometry::{
    axis_angle_to_matrix, distort, matrix_to_axis_angle, matrix_to_euler_xyz, project, undistort,
    AxisAngle, CameraIntrinsics, DistortionCoefficients, EulerAnglesXYZ, ImageFrame, PixelPoint,
    PoseRT,
};
use collimcal::io::dataset::{CameraRole, Columns, DatasetFile, DatasetRecord};
use collimcal::lm::{LeastSquaresProblem, LmSettings, RobustCost};
use collimcal::rig::{derive_seed, distortion_is_monotone, ReticleSpec};

fn axis_angle(max_angle: f64) -> impl Strategy<Value = AxisAngle> {
    (
        -1.0..1.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.0..max_angle,
    )
        .prop_filter("axis too short", |(x, y, z, _)| {
            Vector3::new(*x, *y, *z).norm() > 1e-3
        })
        .prop_map(|(x, y, z, a)| AxisAngle(Vector3::new(x, y, z).normalize() * a))
}

fn intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
    (2600.0..7600.0f64, 0.997..1.003f64, 500.0..1300.0f64, 400.0..1100.0f64)
        .prop_map(|(fx, a, u0, v0)| CameraIntrinsics::new(fx, fx * a, u0, v0).unwrap())
}

fn pose() -> impl Strategy<Value = PoseRT> {
    (axis_angle(0.6), -1.0..1.0f64, -1.0..1.0f64, 2.0..50.0f64)
        .prop_map(|(r, x, y, z)| PoseRT::from_axis_angle(&r, Vector3::new(x, y, z)))
}

fn lens() -> impl Strategy<Value = (CameraIntrinsics, DistortionCoefficients)> {
    (intrinsics(), -0.7..0.7f64, -4.0..4.0f64).prop_filter_map(
        "non-monotone distortion",
        |(k, k1, k2)| {
            let d = DistortionCoefficients::new(k1, k2);
            let r_max = (k.u0.max(1280.0 - k.u0) / k.fx).hypot(k.v0.max(1024.0 - k.v0) / k.fy);
            distortion_is_monotone(&d, 1.2 * r_max).then_some((k, d))
        },
    )
}

fn pose_error(a: &PoseRT, b: &PoseRT) -> f64 {
    a.rotation
        .angle_to(&b.rotation)
        .max((a.translation - b.translation).norm() / b.translation.norm())
}

fn grid_points(n: usize) -> Vec<Vector3<f64>> {
    let mut pts = vec![];
    for i in 0..n {
        for j in 0..n {
            let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            pts.push(Vector3::new(x, y, 0.3 * (x * y + x - y)));
        }
    }
    pts
}

fn observe(
    k: &CameraIntrinsics,
    d: &DistortionCoefficients,
    pose: &PoseRT,
    pts: &[Vector3<f64>],
) -> Vec<Correspondence> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| Correspondence {
            id: i as u32,
            pixel: project(p, pose, k, d).unwrap(),
            point: *p,
        })
        .collect()
}

/// Steps for the camera parameters: the residuals are linear in `k1`, `k2`,
/// so those take a large step to stay clear of roundoff.
fn camera_steps(x: &DVector<f64>) -> Vec<f64> {
    (0..x.len())
        .map(|j| if j == 4 || j == 5 { 1e-3 } else { 1e-6 * x[j].abs().max(1.0) })
        .collect()
}

fn max_column_error<P: LeastSquaresProblem>(problem: &P, x: &DVector<f64>, steps: &[f64]) -> f64 {
    let analytic = problem.jacobian(x);
    let mut numeric = DMatrix::zeros(analytic.nrows(), analytic.ncols());
    for j in 0..x.len() {
        let h = steps.get(j).copied().unwrap_or(1e-6 * x[j].abs().max(1.0));
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let diff = problem.residuals(&xp).unwrap() - problem.residuals(&xm).unwrap();
        numeric.set_column(j, &(diff / (2.0 * h)));
    }
    (0..x.len())
        .map(|j| (analytic.column(j) - numeric.column(j)).norm() / numeric.column(j).norm().max(1e-12))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rodrigues_round_trip(r in axis_angle(std::f64::consts::PI - 1e-6)) {
        let back = matrix_to_axis_angle(&axis_angle_to_matrix(&r)).unwrap();
        prop_assert!((back.0 - r.0).norm() <= 1e-10);
    }

    #[test]
    fn rotation_is_orthonormal(r in axis_angle(std::f64::consts::PI)) {
        let m = *axis_angle_to_matrix(&r).matrix();
        prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).amax() <= 1e-14);
        prop_assert!((m.determinant() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn euler_round_trip(x in -170.0..170.0f64, y in -80.0..80.0f64, z in -170.0..170.0f64) {
        let e = matrix_to_euler_xyz(&EulerAnglesXYZ::new(x, y, z).to_matrix()).unwrap();
        prop_assert!((e.theta_x - x).abs() <= 1e-9);
        prop_assert!((e.theta_y - y).abs() <= 1e-9);
        prop_assert!((e.theta_z - z).abs() <= 1e-9);
    }

    #[test]
    fn distort_undistort_round_trip((k, d) in lens(), u in 0.0..1280.0f64, v in 0.0..1024.0f64) {
        let observed = PixelPoint::new(u, v);
        let ideal = undistort(observed, &k, &d).unwrap();
        prop_assert!(distort(ideal, &k, &d).distance(&observed) <= 1e-6);
    }

    #[test]
    fn projection_decompose_compose(k in intrinsics(), p in pose()) {
        let init = decompose_projection(&ProjectionMatrix::compose(&k, &p)).unwrap();
        prop_assert!((init.intrinsics.fx - k.fx).abs() / k.fx <= 1e-9);
        prop_assert!((init.intrinsics.fy - k.fy).abs() / k.fy <= 1e-9);
        prop_assert!((init.intrinsics.u0 - k.u0).abs() / k.u0 <= 1e-9);
        prop_assert!((init.intrinsics.v0 - k.v0).abs() / k.v0 <= 1e-9);
        prop_assert!(pose_error(&init.pose, &p) <= 1e-9);
    }

    #[test]
    fn homography_decompose_compose(k in intrinsics(), p in pose()) {
        let back = decompose_homography(&Homography::compose(&k, &p), &k).unwrap();
        prop_assert!(pose_error(&back, &p) <= 1e-9);
    }

    #[test]
    fn homography_estimate_recovers_composition(k in intrinsics(), p in pose()) {
        let pts: Vec<PlanarCorrespondence> = (0..25)
            .map(|i| {
                let target = Vector2::new((i % 5) as f64 * 0.2 - 0.4, (i / 5) as f64 * 0.2 - 0.4);
                let pixel = Homography::compose(&k, &p).apply(&target);
                PlanarCorrespondence { id: i, pixel, target }
            })
            .collect();
        let h = estimate_homography(&pts, &k, &DistortionCoefficients::NONE).unwrap();
        let back = decompose_homography(&h, &k).unwrap();
        prop_assert!(pose_error(&back, &p) <= 1e-8);
    }

    #[test]
    fn derived_seeds_differ_by_tag(seed in any::<u64>()) {
        let tags = ["reference", "test", "pixel-noise", "vcp-depth", "field"];
        let mut seeds: Vec<u64> = tags.iter().map(|t| derive_seed(seed, t)).collect();
        prop_assert_eq!(derive_seed(seed, "field"), seeds[4]);
        seeds.sort_unstable();
        seeds.dedup();
        prop_assert_eq!(seeds.len(), tags.len());
    }

    #[test]
    fn reticle_ids_are_unique_and_centred(rows in 2u32..30, cols in 2u32..30, pitch in 1e-4..1e-2f64) {
        let spec = ReticleSpec::new(rows, cols, pitch).unwrap();
        let targets: Vec<_> = spec.targets().collect();
        prop_assert_eq!(targets.len(), (rows * cols) as usize);
        let centroid = targets.iter().map(|(_, t)| t).sum::<Vector2<f64>>() / targets.len() as f64;
        prop_assert!(centroid.norm() <= 1e-12);
        for (id, t) in &targets {
            prop_assert_eq!(spec.target(*id), Some(*t));
        }
        prop_assert_eq!(spec.target(rows * cols), None);
    }

    #[test]
    fn dataset_text_round_trip(
        values in proptest::collection::vec((any::<f64>(), any::<f64>(), any::<f64>(), any::<f64>()), 1..40)
    ) {
        let finite = |x: f64| if x.is_finite() { x } else { 0.5 };
        let ds = DatasetFile {
            role: CameraRole::Test,
            frame: ImageFrame::new(1280, 1024).unwrap(),
            seed: Some(u64::MAX),
            scenario_sha256: None,
            camera: None,
            columns: Columns::Target,
            records: values
                .iter()
                .enumerate()
                .map(|(i, (u, v, x, y))| DatasetRecord {
                    id: i as u32,
                    pixel: PixelPoint::new(finite(*u), finite(*v)),
                    point: None,
                    target: Some(Vector2::new(finite(*x), finite(*y))),
                })
                .collect(),
        };
        let back: DatasetFile = ds.to_text().parse().unwrap();
        prop_assert_eq!(back, ds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn camera_jacobian_matches_central_differences(
        (k, d) in lens(),
        p in pose(),
        dr in axis_angle(0.02),
        scale in 0.95..1.05f64,
    ) {
        let obs = observe(&k, &d, &p, &grid_points(6));
        let init = InitialCalibration {
            intrinsics: CameraIntrinsics { fx: k.fx * scale, ..k },
            distortion: DistortionCoefficients::new(d.k1 * scale, d.k2 / scale),
            pose: PoseRT::from_axis_angle(
                &AxisAngle(matrix_to_axis_angle(&p.rotation).unwrap().0 + dr.0),
                p.translation,
            ),
        };
        let x = CameraProblem::pack(&init).unwrap();
        prop_assert!(max_column_error(&CameraProblem::new(&obs), &x, &camera_steps(&x)) <= 1e-5);
    }

    #[test]
    fn pose_jacobian_matches_central_differences((k, d) in lens(), p in pose()) {
        let pts: Vec<PlanarCorrespondence> = (0..16)
            .map(|i| {
                let target = Vector2::new((i % 4) as f64 * 0.3 - 0.45, (i / 4) as f64 * 0.3 - 0.45);
                let pixel = project(&Vector3::new(target.x, target.y, 0.0), &p, &k, &d).unwrap();
                PlanarCorrespondence { id: i, pixel, target }
            })
            .collect();
        let x = PoseProblem::pack(&p).unwrap();
        prop_assert!(max_column_error(&PoseProblem::new(&pts, k, d), &x, &[]) <= 1e-5);
    }

    #[test]
    fn lm_accepted_steps_are_monotone(
        (k, d) in lens(),
        p in pose(),
        scale in 0.97..1.03f64,
        huber in any::<bool>(),
    ) {
        let obs = observe(&k, &d, &p, &grid_points(8));
        let init = InitialCalibration {
            intrinsics: CameraIntrinsics { fx: k.fx * scale, fy: k.fy * scale, ..k },
            distortion: DistortionCoefficients::NONE,
            pose: p,
        };
        let cost = if huber { RobustCost::default() } else { RobustCost::Squared };
        let refined = refine_camera(&init, &obs, &cost, &LmSettings::default()).unwrap();
        prop_assert!(refined.report.is_monotone());
        for pair in refined.report.trace.iter().filter(|i| i.accepted).collect::<Vec<_>>().windows(2) {
            prop_assert!(pair[1].cost < pair[0].cost);
        }
    }

    #[test]
    fn rms_is_permutation_invariant((k, d) in lens(), p in pose(), shift in 0usize..36) {
        let mut obs = observe(&k, &d, &p, &grid_points(6));
        for (i, o) in obs.iter_mut().enumerate() {
            o.pixel.u += 0.1 * (i as f64).sin();
            o.pixel.v -= 0.1 * (i as f64).cos();
        }
        let a = reprojection_stats(&k, &d, &p, &obs).unwrap();
        obs.rotate_left(shift);
        obs.reverse();
        let b = reprojection_stats(&k, &d, &p, &obs).unwrap();
        prop_assert_eq!(a.rms_px, b.rms_px);
        prop_assert_eq!(a.max_px, b.max_px);
    }
}
