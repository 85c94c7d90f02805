//! `vslam selftest`: fast invariant checks on the installed build.

use std::f64::consts::PI;

use vslam_core::fastslam::resample::systematic_indices;
use vslam_core::fastslam::FilterParams;
use vslam_core::features::Descriptor;
use vslam_core::geom::{normalize_angle, Point3, Pose2, RngStream};
use vslam_core::pipeline::run_dataset;
use vslam_core::sim::{generate_dataset, SimConfig, TrajectorySpec, WorldConfig};
use vslam_core::stereo::{measurement_jacobian, project, triangulate, CameraCalib, ObservationNoise, StereoParams};

use crate::{CliError, CliResult};

type Check = Result<(), String>;
type NamedCheck = (&'static str, fn() -> Check);

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn pose_round_trip() -> Check {
    let mut rng = RngStream::new(1, 0);
    for _ in 0..1000 {
        let mut p = || {
            Pose2::new(
                10.0 * rng.standard_normal(),
                10.0 * rng.standard_normal(),
                4.0 * rng.standard_normal(),
            )
        };
        let (a, b) = (p(), p());
        let c = a.compose(&a.relative_delta(&b));
        ensure(
            c.position_distance(&b) < 1e-9 && normalize_angle(c.theta - b.theta).abs() < 1e-12,
            || format!("{a:?} -> {b:?} gave {c:?}"),
        )?;
    }
    Ok(())
}

fn angle_boundaries() -> Check {
    for (x, want) in [(PI, PI), (-PI, PI), (3.0 * PI, PI), (0.0, 0.0), (2.0 * PI, 0.0)] {
        let got = normalize_angle(x);
        ensure((got - want).abs() < 1e-12, || format!("normalize({x}) = {got}"))?;
    }
    Ok(())
}

fn random_visible_point(rng: &mut RngStream, pose: &Pose2, calib: &CameraCalib, params: &StereoParams) -> Point3 {
    loop {
        let (u, v) = (rng.uniform() * calib.width as f64, rng.uniform() * calib.height as f64);
        let z = 0.5 + 9.5 * rng.uniform();
        let pc = Point3::new((u - calib.cx) * z / calib.fx, (v - calib.cy) * z / calib.fy, z);
        let (r, t) = calib.camera_in_world(pose);
        let p = r * pc + t;
        if project(&p, pose, calib, params).visible {
            return p;
        }
    }
}

fn jacobian_finite_difference() -> Check {
    let (calib, params) = (CameraCalib::default(), StereoParams::default());
    let pose = Pose2::new(1.0, -2.0, 0.7);
    let mut rng = RngStream::new(2, 0);
    for _ in 0..20 {
        let p = random_visible_point(&mut rng, &pose, &calib, &params);
        let h = measurement_jacobian(&p, &pose, &calib, &params).map_err(|e| e.to_string())?;
        for j in 0..3 {
            let step = 1e-6 * p[j].abs().max(1.0);
            let (mut a, mut b) = (p, p);
            a[j] += step;
            b[j] -= step;
            let fd = (project(&a, &pose, &calib, &params).measurement
                - project(&b, &pose, &calib, &params).measurement)
                / (2.0 * step);
            for i in 0..3 {
                let scale = h[(i, j)].abs().max(1e-3);
                ensure((fd[i] - h[(i, j)]).abs() / scale < 1e-4, || {
                    format!("H[{i},{j}] = {} vs finite difference {}", h[(i, j)], fd[i])
                })?;
            }
        }
    }
    Ok(())
}

fn stereo_round_trip() -> Check {
    let (calib, params, noise) = (
        CameraCalib::default(),
        StereoParams::default(),
        ObservationNoise::default(),
    );
    let mut rng = RngStream::new(3, 0);
    for _ in 0..200 {
        let u = rng.uniform() * calib.width as f64;
        let v = rng.uniform() * calib.height as f64;
        let d = 1.0 + rng.uniform() * (u.min(100.0) - 1.0).max(0.0);
        if d <= params.min_disparity_px || u - d < 0.0 {
            continue;
        }
        let g = triangulate(u, v, d, &calib, &noise, &params).map_err(|e| e.to_string())?;
        let back = vslam_core::stereo::project_camera_point(&g.mean, &calib, &params).measurement;
        ensure(
            (back.x - u).abs() < 1e-9 && (back.y - v).abs() < 1e-9 && (back.z - d).abs() < 1e-9,
            || format!("({u}, {v}, {d}) -> {back:?}"),
        )?;
    }
    Ok(())
}

fn descriptor_invariant() -> Check {
    let mut rng = RngStream::new(4, 0);
    for _ in 0..100 {
        let raw: Vec<f64> = (0..128).map(|_| rng.standard_normal().abs().powi(3)).collect();
        if let Ok(d) = Descriptor::from_raw(&raw) {
            ensure(d.satisfies_invariant(), || {
                "descriptor outside unit-norm/clamp invariant".into()
            })?;
        }
    }
    Ok(())
}

fn resample_identity() -> Check {
    let idx = systematic_indices(&[0.1; 10], 0.5);
    ensure(idx == (0..10).collect::<Vec<_>>(), || {
        format!("uniform weights gave {idx:?}")
    })
}

fn filter_determinism() -> Check {
    let config = SimConfig {
        seed: 9,
        world: WorldConfig {
            n_landmarks: 40,
            ..Default::default()
        },
        trajectory: TrajectorySpec {
            n_steps: 30,
            ..Default::default()
        },
        ..Default::default()
    };
    let ds = generate_dataset(&config).map_err(|e| e.to_string())?;
    let params = FilterParams {
        n_particles: 20,
        ..Default::default()
    };
    let (a, _) = run_dataset(&ds, params.clone(), 9, false, true).map_err(|e| e.to_string())?;
    let (b, _) = run_dataset(&ds, params, 9, false, false).map_err(|e| e.to_string())?;
    ensure(a.slam.state == b.slam.state, || {
        "parallel and serial runs differ".into()
    })?;
    let total: f64 = a.slam.state.particles.iter().map(|p| p.log_weight.exp()).sum();
    ensure((total - 1.0).abs() < 1e-9, || format!("weights sum to {total}"))
}

pub fn selftest() -> CliResult<()> {
    let checks: [NamedCheck; 7] = [
        ("pose round trip", pose_round_trip),
        ("angle normalization", angle_boundaries),
        ("measurement jacobian", jacobian_finite_difference),
        ("stereo round trip", stereo_round_trip),
        ("descriptor invariant", descriptor_invariant),
        ("systematic resampling", resample_identity),
        ("filter determinism", filter_determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS  {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} selftest check(s) failed")));
    }
    Ok(())
}
