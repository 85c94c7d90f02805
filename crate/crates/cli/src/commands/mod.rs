mod run;
mod selftest;

use std::path::Path;

use serde::Serialize;

use vslam_core::eval::{ate_rmse, dead_reckoning, heading_error, map_error, EvalError};
use vslam_core::features::{extract_features, match_descriptors, read_pgm, Descriptor, SiftParams};
use vslam_core::geom::{OdometryDelta, Point3, Pose2};
use vslam_core::sim::dataset::{read_gt_landmarks, read_gt_trajectory};
use vslam_core::sim::render::RenderConfig;
use vslam_core::sim::{read_filter_inputs, simulate_to_dir, SimConfig, SimError};

use crate::output::{csv_bytes, with_overrides, write_atomic, write_json};
use crate::{CliError, CliResult, EvalArgs, MatchDemoArgs, SimulateArgs};

pub use run::run;
pub use selftest::selftest;

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Io { .. } | SimError::SchemaViolation { .. } | SimError::ChecksumMismatch { .. } => {
            CliError::Data(e.to_string())
        }
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut config = with_overrides(SimConfig::default(), args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.frames {
        if n == 0 {
            return Err(CliError::Usage("--frames must be >= 1".into()));
        }
        config.trajectory.n_steps = n - 1;
    }
    if let Some(n) = args.landmarks {
        config.world.n_landmarks = n;
    }
    if let Some(p) = args.pattern {
        config.trajectory.pattern = p.into();
    }
    if args.render && config.render.is_none() {
        config.render = Some(RenderConfig::default());
    }
    if let Some(scale) = args.odom_noise_scale {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(CliError::Usage("--odom-noise-scale must be >= 0".into()));
        }
        config = config.mismatched(scale);
    }
    let manifest = simulate_to_dir(&config, &args.out).map_err(sim_error)?;
    println!(
        "wrote {} frames, {} observations to {}",
        manifest.n_frames,
        manifest.n_observations,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    n_frames: usize,
    ate_rmse_m: f64,
    dead_reckoning_ate_m: f64,
    final_position_error_m: f64,
    final_heading_error_rad: f64,
    mean_map_error_m: Option<f64>,
    map_matched_fraction: f64,
    map_size: usize,
}

fn read_trajectory(path: &Path) -> CliResult<Vec<Pose2>> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["frame", "x", "y", "theta"] {
        return Err(bad("unexpected header".into()));
    }
    let mut poses = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = k + 2;
        let num = |i: usize| -> CliResult<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("line {line}: bad column {i}")))
        };
        poses.push(Pose2 {
            x: num(1)?,
            y: num(2)?,
            theta: num(3)?,
        });
    }
    Ok(poses)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let data = |e: SimError| CliError::Data(e.to_string());
    if !args.dataset.is_dir() {
        return Err(CliError::Data(format!(
            "dataset directory not found: {}",
            args.dataset.display()
        )));
    }
    let (manifest, frames) = read_filter_inputs(&args.dataset).map_err(data)?;
    let gt = read_gt_trajectory(&args.dataset, &manifest).map_err(data)?;
    let world = read_gt_landmarks(&args.dataset, &manifest).map_err(data)?;
    let estimate = read_trajectory(&args.run.join("trajectory.csv"))?;
    let map_path = args.run.join("map.json");
    let map_text =
        std::fs::read_to_string(&map_path).map_err(|e| CliError::Data(format!("{}: {e}", map_path.display())))?;
    let map: run::MapFile =
        serde_json::from_str(&map_text).map_err(|e| CliError::Data(format!("{}: {e}", map_path.display())))?;

    let eval_err = |e: EvalError| CliError::Data(e.to_string());
    let ate = ate_rmse(&estimate, &gt).map_err(eval_err)?;
    let odom: Vec<OdometryDelta> = frames.iter().map(|f| f.odom).collect();
    let dr = dead_reckoning(manifest.start_pose, &odom);
    let truth: Vec<Point3> = world.landmarks.iter().map(|l| l.position).collect();
    let (mean_map_error_m, map_matched_fraction) = match map_error(&map.means(), &truth) {
        Ok(m) => (Some(m.mean_error_m), m.matched_fraction),
        Err(EvalError::MatchEmpty) => (None, 0.0),
        Err(e) => return Err(eval_err(e)),
    };
    let (e_last, g_last) = (estimate.last().unwrap(), gt.last().unwrap());
    let summary = EvalSummary {
        n_frames: estimate.len(),
        ate_rmse_m: ate,
        dead_reckoning_ate_m: ate_rmse(&dr, &gt).map_err(eval_err)?,
        final_position_error_m: e_last.position_distance(g_last),
        final_heading_error_rad: heading_error(e_last, g_last),
        mean_map_error_m,
        map_matched_fraction,
        map_size: map.landmarks.len(),
    };
    let out = args.out.clone().unwrap_or_else(|| args.run.join("eval.json"));
    write_json(&out, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializes"));
    Ok(())
}

pub fn match_demo(args: &MatchDemoArgs) -> CliResult<()> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(CliError::Usage("--ratio must be in (0, 1]".into()));
    }
    let load = |p: &Path| read_pgm(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())));
    let (left, right) = (load(&args.left)?, load(&args.right)?);
    let params = SiftParams::default();
    let fl = extract_features(&left, &params).map_err(|e| CliError::Data(e.to_string()))?;
    let fr = extract_features(&right, &params).map_err(|e| CliError::Data(e.to_string()))?;
    let da: Vec<Descriptor> = fl.iter().map(|f| f.descriptor.clone()).collect();
    let db: Vec<Descriptor> = fr.iter().map(|f| f.descriptor.clone()).collect();
    let matches = match_descriptors(&da, &db, args.ratio);

    let keypoints = csv_bytes(
        &["image", "index", "u", "v", "scale", "orientation", "response"],
        [("left", &fl), ("right", &fr)].into_iter().flat_map(|(name, fs)| {
            fs.iter().enumerate().map(move |(i, f)| {
                let k = &f.keypoint;
                vec![
                    name.to_string(),
                    i.to_string(),
                    k.u.to_string(),
                    k.v.to_string(),
                    k.scale.to_string(),
                    k.orientation.to_string(),
                    k.response.to_string(),
                ]
            })
        }),
    );
    let match_rows = csv_bytes(
        &[
            "left_index",
            "right_index",
            "left_u",
            "left_v",
            "right_u",
            "right_v",
            "distance",
            "ratio",
        ],
        matches.iter().map(|m| {
            let (a, b) = (&fl[m.index_a].keypoint, &fr[m.index_b].keypoint);
            vec![
                m.index_a.to_string(),
                m.index_b.to_string(),
                a.u.to_string(),
                a.v.to_string(),
                b.u.to_string(),
                b.v.to_string(),
                m.distance.to_string(),
                m.ratio.to_string(),
            ]
        }),
    );
    write_atomic(&args.out.join("keypoints.csv"), &keypoints)?;
    write_atomic(&args.out.join("matches.csv"), &match_rows)?;
    println!(
        "left {} keypoints, right {} keypoints, {} matches",
        fl.len(),
        fr.len(),
        matches.len()
    );
    Ok(())
}
