use std::fs;
use std::path::Path;

use vslam_core::features::{Descriptor, GrayImage};
use vslam_core::geom::{Point3, Pose2, RngStream};
use vslam_core::sim::dataset::{
    read_frame_images, read_manifest, FRAMES_FILE, GT_LANDMARKS_FILE, GT_TRAJECTORY_FILE, ORACLE_FILE,
};
use vslam_core::sim::{
    generate_dataset, generate_trajectory, generate_world, observe, read_dataset, read_filter_inputs,
    render_frame_images, simulate_to_dir, Bounds, Pattern, RenderConfig, SensorModel, SimConfig, SimError,
    TrajectorySpec, WorldConfig, WorldLandmark, WorldModel,
};
use vslam_core::stereo::{project, CameraCalib, ObservationNoise, StereoParams};

#[test]
fn single_landmark_world() {
    let config = WorldConfig {
        n_landmarks: 1,
        ..WorldConfig::default()
    };
    let w = generate_world(3, &config).unwrap();
    assert_eq!(w.landmarks.len(), 1);
    let p = w.landmarks[0].position;
    assert!(config.bounds.contains(p.x, p.y));
    assert!(p.z >= config.height_range[0] && p.z <= config.height_range[1]);
}

#[test]
fn worlds_are_deterministic() {
    let config = WorldConfig::default();
    let a = generate_world(5, &config).unwrap();
    let b = generate_world(5, &config).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_ne!(a, generate_world(6, &config).unwrap());
}

#[test]
fn world_descriptors_are_separated() {
    let w = generate_world(8, &WorldConfig::default()).unwrap();
    assert_eq!(w.landmarks.len(), 150);
    let mut min = f64::INFINITY;
    for (i, a) in w.landmarks.iter().enumerate() {
        assert_eq!(a.id, i as u64);
        assert!(a.descriptor.satisfies_invariant());
        for b in &w.landmarks[i + 1..] {
            let d2: f64 = a
                .descriptor
                .values()
                .iter()
                .zip(b.descriptor.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            min = min.min(d2.sqrt());
        }
    }
    assert!(min >= 0.5, "{min}");
}

#[test]
fn straight_trajectory_from_origin() {
    let spec = TrajectorySpec {
        pattern: Pattern::Straight,
        n_steps: 10,
        step_length: 0.1,
        start: Some(Pose2::identity()),
        ..TrajectorySpec::default()
    };
    let bounds = Bounds {
        x_min: -1.0,
        x_max: 2.0,
        y_min: -1.0,
        y_max: 1.0,
    };
    let poses = generate_trajectory(&spec, &bounds).unwrap();
    assert_eq!(poses.len(), 11);
    let last = poses.last().unwrap();
    assert!(
        (last.x - 1.0).abs() < 1e-12 && last.y.abs() < 1e-12 && last.theta == 0.0,
        "{last:?}"
    );
}

#[test]
fn loop_closes_within_one_step() {
    for n in [50, 120, 200, 250] {
        let spec = TrajectorySpec {
            n_steps: n,
            ..TrajectorySpec::default()
        };
        let poses = generate_trajectory(&spec, &Bounds::default()).unwrap();
        let (a, b) = (poses[0], *poses.last().unwrap());
        assert!(a.position_distance(&b) <= spec.step_length);
        for w in poses.windows(2) {
            assert!((w[0].position_distance(&w[1]) - spec.step_length).abs() < 1e-3);
        }
    }
}

#[test]
fn random_specs_stay_in_bounds_or_fail() {
    let mut rng = RngStream::new(4, 0);
    let bounds = Bounds::default();
    let (mut ok, mut failed) = (0, 0);
    for _ in 0..100 {
        let pattern = [Pattern::Loop, Pattern::Lawnmower, Pattern::Straight][(rng.uniform() * 3.0) as usize];
        let spec = TrajectorySpec {
            pattern,
            step_length: 0.05 + 0.2 * rng.uniform(),
            n_steps: 1 + (rng.uniform() * 400.0) as usize,
            lane_spacing: 1.0 + 2.0 * rng.uniform(),
            ..TrajectorySpec::default()
        };
        match generate_trajectory(&spec, &bounds) {
            Ok(poses) => {
                ok += 1;
                assert_eq!(poses.len(), spec.n_steps + 1);
                assert!(poses.iter().all(|p| bounds.contains(p.x, p.y)), "{spec:?}");
            }
            Err(SimError::OutOfBounds { .. }) => failed += 1,
            Err(e) => panic!("{e}"),
        }
    }
    assert!(ok > 30 && failed > 0, "{ok} ok, {failed} out of bounds");
}

fn scene() -> WorldModel {
    generate_world(
        2,
        &WorldConfig {
            n_landmarks: 40,
            bounds: Bounds {
                x_min: 2.0,
                x_max: 8.0,
                y_min: -2.0,
                y_max: 2.0,
            },
            ..WorldConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn observation_limits() {
    let (calib, stereo) = (CameraCalib::default(), StereoParams::default());
    let world = scene();
    let pose = Pose2::identity();
    let mut rng = RngStream::new(1, 0);
    let none = SensorModel {
        detection_prob: 0.0,
        ..SensorModel::default()
    };
    assert!(observe(&pose, &world, &calib, &stereo, &none, &mut rng).is_empty());

    let exact = SensorModel {
        noise: ObservationNoise {
            sigma_u: 0.0,
            sigma_v: 0.0,
            sigma_d: 0.0,
        },
        sigma_desc: 0.0,
        detection_prob: 1.0,
    };
    let obs = observe(&pose, &world, &calib, &stereo, &exact, &mut rng);
    let visible: Vec<&WorldLandmark> = world
        .landmarks
        .iter()
        .filter(|l| project(&l.position, &pose, &calib, &stereo).visible)
        .collect();
    assert!(visible.len() > 10);
    assert_eq!(obs.len(), visible.len());
    for (t, l) in obs.iter().zip(visible) {
        assert_eq!(t.landmark_id, l.id);
        let m = project(&l.position, &pose, &calib, &stereo).measurement;
        assert_eq!(t.observation.measurement(), m);
        assert_eq!(t.observation.descriptor, l.descriptor);
    }
}

#[test]
fn detection_rate_matches_probability() {
    let (calib, stereo) = (CameraCalib::default(), StereoParams::default());
    let world = scene();
    let pose = Pose2::identity();
    let sensor = SensorModel::default();
    let visible = world
        .landmarks
        .iter()
        .filter(|l| project(&l.position, &pose, &calib, &stereo).visible)
        .count();
    let mut rng = RngStream::new(2, 0);
    let mut seen = 0;
    let frames = 10_000;
    for _ in 0..frames {
        seen += observe(&pose, &world, &calib, &stereo, &sensor, &mut rng).len();
    }
    let rate = seen as f64 / (frames * visible) as f64;
    assert!((rate - sensor.detection_prob).abs() < 0.02, "{rate}");
}

fn pixel_sum(img: &GrayImage) -> f64 {
    img.pixels().iter().sum()
}

#[test]
fn empty_world_renders_background() {
    let calib = CameraCalib::default();
    let config = RenderConfig::default();
    let world = WorldModel {
        landmarks: Vec::new(),
        bounds: Bounds::default(),
    };
    let (l, r) = render_frame_images(&Pose2::identity(), &world, &calib, &StereoParams::default(), &config);
    for img in [&l, &r] {
        assert_eq!((img.width(), img.height()), (calib.width, calib.height));
        assert!(img.pixels().iter().all(|&p| p == config.background));
    }
    assert_eq!(pixel_sum(&l), pixel_sum(&r));
}

/// Background-subtracted intensity centroid in a square window.
fn centroid(img: &GrayImage, cx: f64, cy: f64, half: usize, background: f64) -> (f64, f64) {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let (x0, y0) = (cx.round() as usize - half, cy.round() as usize - half);
    for y in y0..=y0 + 2 * half {
        for x in x0..=x0 + 2 * half {
            let w = img.get(x, y) - background;
            sw += w;
            sx += w * x as f64;
            sy += w * y as f64;
        }
    }
    (sx / sw, sy / sw)
}

#[test]
fn principal_ray_blob_centroids() {
    let calib = CameraCalib::default();
    let stereo = StereoParams::default();
    let config = RenderConfig::default();
    // camera frame (0, 0, 1.2)
    let world = WorldModel {
        landmarks: vec![WorldLandmark {
            id: 0,
            position: Point3::new(1.2 + calib.mount_forward_m, 0.0, calib.mount_height_m),
            descriptor: Descriptor::from_raw(&[1.0; 128]).unwrap(),
        }],
        bounds: Bounds::default(),
    };
    let (l, r) = render_frame_images(&Pose2::identity(), &world, &calib, &stereo, &config);
    let d = calib.disparity_depth_product() / 1.2;
    let (lx, ly) = centroid(&l, calib.cx, calib.cy, 12, config.background);
    let (rx, ry) = centroid(&r, calib.cx - d, calib.cy, 12, config.background);
    assert!((lx - calib.cx).hypot(ly - calib.cy) < 0.5, "({lx}, {ly})");
    assert!((rx - (calib.cx - d)).hypot(ry - calib.cy) < 0.5, "({rx}, {ry})");
}

fn small_config(seed: u64, frames: usize) -> SimConfig {
    SimConfig {
        seed,
        world: WorldConfig {
            n_landmarks: 60,
            ..WorldConfig::default()
        },
        trajectory: TrajectorySpec {
            n_steps: frames - 1,
            ..TrajectorySpec::default()
        },
        ..SimConfig::default()
    }
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn rendering_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small_config(3, 4);
    config.render = Some(RenderConfig::default());
    simulate_to_dir(&config, &tmp.path().join("a")).unwrap();
    simulate_to_dir(&config, &tmp.path().join("b")).unwrap();
    let a = dir_files(&tmp.path().join("a"));
    assert_eq!(a.iter().filter(|(n, _)| n.ends_with(".pgm")).count(), 8);
    assert_eq!(a, dir_files(&tmp.path().join("b")));
    let m = read_manifest(&tmp.path().join("a")).unwrap();
    let (l, _) = read_frame_images(&tmp.path().join("a"), &m, 2).unwrap();
    assert_eq!(l.width(), config.calibration.width);
}

#[test]
fn dataset_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = generate_dataset(&small_config(4, 5)).unwrap();
    let manifest = vslam_core::sim::write_dataset(&ds, tmp.path()).unwrap();
    let back = read_dataset(tmp.path()).unwrap();
    assert_eq!(back.manifest, manifest);
    assert_eq!(back.world, ds.world);
    assert_eq!(back.frames, ds.frames);
    assert_eq!(ds.frames.len(), 5);
    assert_eq!(ds.frames[0].odom, Default::default());
}

#[test]
fn truncated_file_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_to_dir(&small_config(5, 6), tmp.path()).unwrap();
    let path = tmp.path().join(FRAMES_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() - 8]).unwrap();
    match read_filter_inputs(tmp.path()) {
        Err(SimError::SchemaViolation { file, line, .. }) => {
            assert_eq!(file, FRAMES_FILE);
            // header is line 1; the sixth frame is line 7
            assert_eq!(line, 7);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn altered_file_fails_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_to_dir(&small_config(6, 6), tmp.path()).unwrap();
    let path = tmp.path().join(GT_TRAJECTORY_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = lines[3].replacen(",", ",1", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(read_filter_inputs(tmp.path()).is_ok());
    match read_dataset(tmp.path()) {
        Err(SimError::ChecksumMismatch { file }) => assert_eq!(file, GT_TRAJECTORY_FILE),
        other => panic!("{other:?}"),
    }
}

#[test]
fn regeneration_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    simulate_to_dir(
        &SimConfig {
            seed: 12,
            ..SimConfig::default()
        },
        &first,
    )
    .unwrap();
    let manifest = read_manifest(&first).unwrap();
    assert_eq!(manifest.n_frames, 201);
    let again = tmp.path().join("again");
    simulate_to_dir(&manifest.config, &again).unwrap();
    assert_eq!(dir_files(&first), dir_files(&again));
}

#[test]
fn stored_observations_are_valid_and_visible() {
    let config = SimConfig {
        seed: 13,
        ..SimConfig::default()
    };
    let ds = generate_dataset(&config).unwrap();
    let (calib, stereo) = (config.calibration, config.stereo);
    let n = config.sensor.noise;
    let mut count = 0;
    for f in &ds.frames {
        assert_eq!(f.observations.len(), f.truth_ids.len());
        for (o, id) in f.observations.iter().zip(&f.truth_ids) {
            assert!(o.is_valid(&calib, &stereo));
            assert!(o.descriptor.satisfies_invariant());
            let lm = &ds.world.landmarks[*id as usize];
            let p = project(&lm.position, &f.true_pose, &calib, &stereo);
            assert!(p.visible);
            assert!((o.u - p.measurement.x).abs() < 6.0 * n.sigma_u);
            assert!((o.v - p.measurement.y).abs() < 6.0 * n.sigma_v);
            assert!((o.d - p.measurement.z).abs() < 6.0 * n.sigma_d);
            count += 1;
        }
    }
    assert_eq!(count, ds.manifest.n_observations);
}

#[test]
fn filter_loader_ignores_side_files() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_to_dir(&small_config(7, 8), tmp.path()).unwrap();
    for f in [ORACLE_FILE, GT_TRAJECTORY_FILE, GT_LANDMARKS_FILE] {
        fs::remove_file(tmp.path().join(f)).unwrap();
    }
    let (manifest, frames) = read_filter_inputs(tmp.path()).unwrap();
    assert_eq!(frames.len(), manifest.n_frames);
    assert!(matches!(read_dataset(tmp.path()), Err(SimError::Io { .. })));
}
