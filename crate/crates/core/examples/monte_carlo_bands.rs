//! Seeded Monte Carlo over the simulated bench: closure error, reprojection
//! rms, attitude error and field-test improvement.
//!
//!     cargo run --release --example monte_carlo_bands -- [trials]

use collimcal::field::{evaluate_field, FieldTestConfig, FieldTruth};
use collimcal::geometry::matrix_to_euler_xyz;
use collimcal::lm::{LmSettings, RobustCost};
use collimcal::pipeline::calibrate_bench;
use collimcal::rig::{build_nominal_intrinsics, presets, sample_bench, simulate_bench};

fn quantiles(mut v: Vec<f64>) -> String {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    format!(
        "min {:.3e}  p50 {:.3e}  p90 {:.3e}  p99 {:.3e}  max {:.3e}",
        q(0.0),
        q(0.5),
        q(0.9),
        q(0.99),
        q(1.0)
    )
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn main() -> collimcal::Result<()> {
    let trials: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let lm = LmSettings::default();
    let cost = RobustCost::default();

    let mut intrinsic_rel = vec![];
    let mut rotation = vec![];
    for seed in 0..trials {
        let bench = sample_bench(seed, 0.0);
        let obs = simulate_bench(&bench)?;
        let (cam, _) = calibrate_bench(&bench, &obs, &cost, &lm)?;
        let (k, t) = (cam.refined.intrinsics, bench.test.camera.intrinsics);
        let worst = [(k.fx, t.fx), (k.fy, t.fy), (k.u0, t.u0), (k.v0, t.v0)]
            .iter()
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        intrinsic_rel.push(worst);
        rotation.push(cam.refined.pose.rotation.angle_to(&bench.true_relative_pose().rotation));
    }
    println!("closure   intrinsic rel  {}", quantiles(intrinsic_rel));
    println!("closure   rotation rad   {}", quantiles(rotation));

    let truth = presets::device_attitude().as_array();
    let mut rms = vec![];
    let mut axis_err: [Vec<f64>; 3] = Default::default();
    for seed in 0..trials {
        let bench = presets::device_bench(0.1, seed);
        let obs = simulate_bench(&bench)?;
        let (cam, att) = calibrate_bench(&bench, &obs, &cost, &lm)?;
        rms.push(cam.refined.rms_reprojection_px);
        let e = matrix_to_euler_xyz(&att.r_r)?.as_array();
        for a in 0..3 {
            axis_err[a].push((e[a] - truth[a]).abs());
        }
    }
    let under = |lim: f64| rms.iter().filter(|r| **r < lim).count();
    println!(
        "noise     rms px         {}  (<0.15: {}, <0.20: {})",
        quantiles(rms.clone()),
        under(0.15),
        under(0.20)
    );
    for (name, v) in ["x", "y", "z"].iter().zip(&axis_err) {
        let (m, s) = mean_std(v);
        println!("attitude  |d theta_{name}| deg  mean {m:.3e}  std {s:.3e}");
    }

    let nominal = build_nominal_intrinsics(
        presets::DEVICE_FOCAL_MM,
        presets::DEVICE_PIXEL_UM,
        presets::DEVICE_FRAME.width,
        presets::DEVICE_FRAME.height,
    )?;
    let field_truth = FieldTruth {
        camera: presets::device_camera(),
        r_r: presets::device_attitude().to_matrix(),
        frame: presets::DEVICE_FRAME,
    };
    let cfg = FieldTestConfig::default();
    let (mut wins, mut nom, mut cal) = (0, vec![], vec![]);
    for seed in 0..2 * trials {
        let bench = presets::device_bench(0.1, seed);
        let obs = simulate_bench(&bench)?;
        let (cam, att) = calibrate_bench(&bench, &obs, &cost, &lm)?;
        let ev = evaluate_field(&field_truth, &nominal, &cam.camera(), &att.r_r, &cfg, seed)?;
        wins += usize::from(ev.calibrated.mean_abs_deg < ev.nominal.mean_abs_deg);
        nom.push(ev.nominal.mean_abs_deg);
        cal.push(ev.calibrated.mean_abs_deg);
    }
    let (mn, _) = mean_std(&nom);
    let (mc, _) = mean_std(&cal);
    println!(
        "field     nominal {mn:.4} deg  calibrated {mc:.4} deg  reduction {:.1}%  wins {wins}/{}",
        100.0 * (1.0 - mc / mn),
        2 * trials
    );
    Ok(())
}
