use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scapegeom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn straight_line(dir: &Path) -> std::path::PathBuf {
    let poses: Vec<Value> = (0..31)
        .map(|i| {
            serde_json::json!({
                "rotation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                "translation": [0.0, 0.0, i as f64],
            })
        })
        .collect();
    let traj = serde_json::json!({
        "intrinsics": {"fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 3.0, "width": 8, "height": 6},
        "poses": poses,
    });
    let path = dir.join("t.json");
    std::fs::write(&path, traj.to_string()).unwrap();
    path
}

#[test]
fn select_keyframes_on_a_straight_line() {
    let dir = tempfile::tempdir().unwrap();
    let t = straight_line(dir.path());
    let out = run(&["select-keyframes", "--beta", "10", "--gamma", "20", "--trajectory", p(&t)]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[0,10,20,30]");
}

#[test]
fn missing_flag_is_a_usage_error() {
    let out = run(&["select-keyframes", "--beta", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--trajectory"), "{err}");
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn sample_requires_seed_and_is_deterministic() {
    assert_eq!(run(&["sample", "--steps", "10"]).status.code(), Some(2));
    let args = ["sample", "--steps", "10", "--seed", "9", "--count", "4", "--emit-samples"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["count"], 4);
    assert_eq!(v["samples"].as_array().unwrap().len(), 4);
    let c = run(&["sample", "--steps", "10", "--seed", "10", "--count", "4", "--emit-samples"]);
    assert_ne!(a.stdout, c.stdout);
}

fn corridor(dir: &Path) -> std::path::PathBuf {
    let s = dir.join("synth");
    stdout_json(&run(&["synth-corridor", "--out", p(&s)]));
    s
}

#[test]
fn loss_of_identical_images_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = corridor(dir.path());
    let rgb = s.join("initial_rgb.png");
    let depth = s.join("initial_depth.png");
    let v = stdout_json(&run(&[
        "loss", "--x-rgb", p(&rgb), "--x-depth", p(&depth), "--h-rgb", p(&rgb), "--h-depth", p(&depth),
    ]));
    assert_eq!(v["loss"], 0.0);
    assert_eq!(v["kept_pixels"].as_u64().unwrap() + v["trimmed_pixels"].as_u64().unwrap(), 32 * 24);
}

#[test]
fn pipeline_with_stub_is_consistent_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let s = corridor(dir.path());
    let out = dir.path().join("out");
    let v = stdout_json(&run(&[
        "pipeline",
        "--scene",
        p(&s.join("scene.json")),
        "--trajectory",
        p(&s.join("trajectory.json")),
        "--out",
        p(&out),
    ]));
    assert_eq!(v["visit_order"], serde_json::json!([0, 30, 20, 10]));
    assert_eq!(v["warp_losses"], serde_json::json!([null, 0.0, 0.0, 0.0]));
    let scene = scapegeom::read_scene(&out).unwrap();
    assert_eq!(scene.keyframes.len(), 4);
    assert_eq!(scene.cloud.len() as u64, v["points"].as_u64().unwrap());
}

#[test]
fn stochastic_pipeline_needs_seed() {
    let dir = tempfile::tempdir().unwrap();
    let s = corridor(dir.path());
    let (scene, traj) = (s.join("scene.json"), s.join("trajectory.json"));
    let out = dir.path().join("o");
    let args = [
        "pipeline",
        "--scene",
        p(&scene),
        "--trajectory",
        p(&traj),
        "--generator",
        "gaussian-diffusion",
        "--out",
        p(&out),
    ];
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn domain_errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = run(&["select-keyframes", "--trajectory", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MissingFile");
    assert!(err["message"].as_str().unwrap().contains("absent.json"));
}

#[test]
fn filter_drops_largest() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("l.json");
    std::fs::write(&f, "[0.1, 0.5, 0.2, 0.9]").unwrap();
    let out = run(&["filter", "--losses", p(&f), "--drop", "0.25"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[0,1,2]");
}

#[test]
fn rasterize_writes_three_images() {
    let dir = tempfile::tempdir().unwrap();
    let s = corridor(dir.path());
    let controls = dir.path().join("c.json");
    std::fs::write(
        &controls,
        r#"{"polylines":[{"layer":"lane_boundary","points":[[-1.5,1.5,2],[-1.5,1.5,40]]}],
            "boxes":[{"category":"vehicle","center":[1,0.5,10],"size":[4,2,1.5],"yaw":0.3}]}"#,
    )
    .unwrap();
    let out = dir.path().join("ctrl");
    stdout_json(&run(&[
        "rasterize",
        "--controls",
        p(&controls),
        "--camera",
        p(&s.join("camera.json")),
        "--out-dir",
        p(&out),
    ]));
    for f in ["map.png", "semantic_boxes.png", "orientation_boxes.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn backproject_then_render_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let s = corridor(dir.path());
    let cloud = dir.path().join("c.ply");
    let v = stdout_json(&run(&[
        "backproject",
        "--rgb",
        p(&s.join("initial_rgb.png")),
        "--depth",
        p(&s.join("initial_depth.png")),
        "--camera",
        p(&s.join("camera.json")),
        "--out",
        p(&cloud),
    ]));
    assert_eq!(v["points"], 32 * 24);
    let r = dir.path().join("r");
    let v = stdout_json(&run(&[
        "render",
        "--cloud",
        p(&cloud),
        "--camera",
        p(&s.join("camera.json")),
        "--out-dir",
        p(&r),
    ]));
    assert_eq!(v["visible_pixels"], 32 * 24);
    assert_eq!(
        scapegeom::png_io::read_rgb8(r.join("rgb.png")).unwrap(),
        scapegeom::png_io::read_rgb8(s.join("initial_rgb.png")).unwrap()
    );
}
