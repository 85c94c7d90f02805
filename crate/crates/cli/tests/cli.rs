use std::path::Path;
use std::process::{Command, Output};

fn vslam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vslam")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vslam(args);
    assert!(
        out.status.success(),
        "vslam {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, frames: usize) {
    ok(&[
        "simulate",
        "--out",
        s(dir),
        "--seed",
        "2",
        "--frames",
        &frames.to_string(),
    ]);
}

#[test]
fn run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    simulate(&data, 200);
    ok(&["run", "--dataset", s(&data), "--out", s(&out), "--particles", "30"]);
    for f in ["trajectory.csv", "map.json", "metrics.json", "report.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("frame,x,y,theta"));
    assert_eq!(traj.lines().count(), 201);
    assert_eq!(
        std::fs::read_to_string(out.join("report.csv")).unwrap().lines().count(),
        201
    );

    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["seed"], 2);
    assert_eq!(metrics["config"]["filter"]["n_particles"], 30);
    assert_eq!(metrics["config"]["mode"], "observations");
    assert_eq!(metrics["n_frames"], 200);
    assert_eq!(metrics["per_frame"].as_array().unwrap().len(), 200);
    for key in ["ate_rmse_m", "dead_reckoning_ate_m", "mean_neff", "runtime_seconds"] {
        assert!(metrics[key].as_f64().unwrap().is_finite(), "{key}");
    }
    let map = json(&out.join("map.json"));
    assert_eq!(
        map["landmarks"].as_array().unwrap().len(),
        metrics["map_size"].as_u64().unwrap() as usize
    );
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let out = vslam(&["run", "--dataset", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn corrupted_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, 10);
    let obs = data.join("observations.csv");
    let mut text = std::fs::read_to_string(&obs).unwrap();
    text.push_str("garbage\n");
    std::fs::write(&obs, text).unwrap();
    let out = vslam(&["run", "--dataset", s(&data), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, 5);
    let o = s(&tmp.path().join("o")).to_string();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--dataset", s(&data)],
        vec!["run", "--dataset", s(&data), "--out", &o, "--bogus"],
        vec!["run", "--dataset", s(&data), "--out", &o, "--checkpoint-every", "0"],
        vec![
            "run",
            "--dataset",
            s(&data),
            "--out",
            &o,
            "--oracle-assoc",
            "--mode",
            "images",
        ],
        vec!["run", "--dataset", s(&data), "--out", &o, "--particles", "0"],
        vec![
            "run",
            "--dataset",
            s(&data),
            "--out",
            &o,
            "--config",
            r#"{"no_such_key": 1}"#,
        ],
        vec!["run", "--dataset", s(&data), "--out", &o, "--serial", "--threads", "2"],
        vec!["simulate", "--out", &o, "--frames", "0"],
        vec!["match-demo", "a.pgm", "b.pgm", "--out", &o, "--ratio", "1.5"],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(vslam(&args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(vslam(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, 30);
    simulate(&b, 30);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(
            std::fs::read(a.join(&n)).unwrap(),
            std::fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn resume_continues_the_same_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, 60);
    let (full, resumed) = (tmp.path().join("full"), tmp.path().join("resumed"));
    let common = ["--dataset", s(&data), "--particles", "20"];
    let mut args = vec!["run", "--out", s(&full), "--checkpoint-every", "20"];
    args.extend(common);
    ok(&args);
    let cp = full.join("checkpoints").join("checkpoint_000020.json");
    assert!(cp.is_file());
    let mut args = vec!["run", "--out", s(&resumed), "--resume", s(&cp)];
    args.extend(common);
    ok(&args);
    for f in ["trajectory.csv", "map.json", "report.csv"] {
        assert_eq!(
            std::fs::read(full.join(f)).unwrap(),
            std::fs::read(resumed.join(f)).unwrap(),
            "{f}"
        );
    }
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("runtime_seconds");
        v
    };
    assert_eq!(
        strip(json(&full.join("metrics.json"))),
        strip(json(&resumed.join("metrics.json")))
    );

    // a checkpoint only resumes a run with the same settings
    let mut args = vec!["run", "--out", s(&resumed), "--resume", s(&cp), "--seed", "99"];
    args.extend(common);
    assert_eq!(vslam(&args).status.code(), Some(1));
}

#[test]
fn eval_reproduces_run_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    simulate(&data, 40);
    ok(&["run", "--dataset", s(&data), "--out", s(&out), "--particles", "20"]);
    ok(&["eval", "--dataset", s(&data), "--run", s(&out)]);
    let (m, e) = (json(&out.join("metrics.json")), json(&out.join("eval.json")));
    for key in [
        "n_frames",
        "ate_rmse_m",
        "dead_reckoning_ate_m",
        "final_position_error_m",
        "final_heading_error_rad",
        "map_matched_fraction",
        "map_size",
    ] {
        assert_eq!(m[key], e[key], "{key}");
    }
    let mean_err = (m["mean_map_error_m"].as_f64().unwrap() - e["mean_map_error_m"].as_f64().unwrap()).abs();
    // map.json stores means with full round-trip precision
    assert!(mean_err < 1e-12);

    let missing = vslam(&["eval", "--dataset", s(&data), "--run", s(&tmp.path().join("none"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn match_demo_on_rendered_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("data"), tmp.path().join("out"));
    ok(&[
        "simulate",
        "--out",
        s(&data),
        "--frames",
        "1",
        "--landmarks",
        "60",
        "--render",
    ]);
    let img = data.join("img");
    ok(&[
        "match-demo",
        s(&img.join("left_000000.pgm")),
        s(&img.join("right_000000.pgm")),
        "--out",
        s(&out),
    ]);
    let kps = std::fs::read_to_string(out.join("keypoints.csv")).unwrap();
    let matches = std::fs::read_to_string(out.join("matches.csv")).unwrap();
    assert!(kps.starts_with("image,index,u,v,scale,orientation,response\n"));
    assert!(matches.starts_with("left_index,right_index,"));
    let (mut n, mut rectified) = (0, 0);
    for line in matches.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[7] <= 0.8);
        // the matcher knows nothing of stereo geometry, so only most matches
        // are expected on the same row with the right point to the left
        if (cols[3] - cols[5]).abs() < 2.0 && cols[4] <= cols[2] + 1.0 {
            rectified += 1;
        }
        n += 1;
    }
    assert!(n >= 10, "{n} matches");
    assert!(
        rectified as f64 >= 0.8 * n as f64,
        "{rectified} of {n} consistent with the stereo geometry"
    );

    let bad = vslam(&[
        "match-demo",
        s(&data.join("frames.csv")),
        s(&img.join("right_000000.pgm")),
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    assert!(!out.contains("FAIL"));
}
