//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use rand::Rng;
use scapegeom::consistency::{warp_loss_gradient_packed, warp_loss_packed};
use scapegeom::depth_codec::{decode_depth16_value, encode_depth16_value};
use scapegeom::diffusion::{analytic_gaussian_denoiser, sample_batch, Condition};
use scapegeom::keyframe::SceneOptions;
use scapegeom::scene_io::read_scene;
use scapegeom::synthetic::Corridor;
use scapegeom::{
    back_project, filter_dataset, generate_scene, order_viewpoints, render_points, select_keyframes,
    warp_loss, write_scene, CameraIntrinsics, ConsistencyConfig, CopyThroughGenerator,
    DepthCodecConfig, GuidanceConfig, KeyframeSelectionConfig, NoiseSchedule, Pose, RenderOptions,
    Trajectory, Z_NEAR,
};

const ROUND_TRIP_DEPTH_REL: f64 = 1e-5;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const ZBUFFER_BUDGET: Duration = Duration::from_secs(10);
const GRADIENT_REL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const SAMPLER_BUDGET: Duration = Duration::from_secs(60);
const SAMPLER_COUNT: usize = 10_000;
const SAMPLER_STEPS: usize = 50;
const ORACLE_MU: f64 = 0.5;
const ORACLE_SIGMA: f64 = 0.5;
const VARIANCE_REL: f64 = 0.05;
const GUIDANCE_WEIGHTS: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
const Z_95: f64 = 1.96;
const PIPELINE_BUDGET: Duration = Duration::from_secs(30);
const CODEC_BOUND: f64 = 300.0 / 65536.0;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let elapsed = start.elapsed();
    let o = Outcome {
        name,
        pass,
        detail,
        elapsed,
    };
    println!(
        "{} {:<28} {:>8.2}s  {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.elapsed.as_secs_f64(),
        o.detail
    );
    o
}

fn projection_round_trip() -> (bool, String) {
    let start = Instant::now();
    let mut rng = common::rng(101);
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut pixels = 0;
    for _ in 0..100 {
        let cam = common::random_camera(&mut rng, 64);
        let img = common::random_image(&mut rng, cam.height(), cam.width(), (0.5, 50.0), 0.1);
        let cloud = back_project(&img, &cam, 0).unwrap();
        let out = render_points(&cloud, &cam, &RenderOptions::default());
        for ((r, c), &d) in img.depth.indexed_iter() {
            let valid = d > 0.0;
            if out.mask.0[(r, c)] != valid {
                failures += 1;
                continue;
            }
            if !valid {
                continue;
            }
            pixels += 1;
            let rel = (out.image.depth[(r, c)] - d).abs() / d;
            worst = worst.max(rel);
            if rel >= ROUND_TRIP_DEPTH_REL || out.image.color(r, c) != img.color(r, c) {
                failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    (
        failures == 0 && elapsed < ROUND_TRIP_BUDGET,
        format!("{pixels} valid pixels, {failures} mismatches, max depth rel err {worst:.2e} (< {ROUND_TRIP_DEPTH_REL:e}), budget {ROUND_TRIP_BUDGET:?}"),
    )
}

fn zbuffer_oracle() -> (bool, String) {
    let start = Instant::now();
    let mut rng = common::rng(202);
    let mut mismatched = 0;
    let mut covered = 0;
    for scene in 0..50 {
        let cam = common::random_camera(&mut rng, 48);
        let n = rng.random_range(1..=1000);
        let cloud = common::colliding_cloud(&mut rng, &cam, n);
        let radius = scene % 3;
        let opts = RenderOptions {
            splat_radius: radius,
            z_near: Z_NEAR,
        };
        let got = render_points(&cloud, &cam, &opts);
        let (rgb, depth, mask) = common::zbuffer_oracle(&cloud, &cam, Z_NEAR, radius);
        covered += mask.iter().filter(|&&m| m).count();
        if got.image.rgb != rgb || got.image.depth != depth || got.mask.0 != mask {
            mismatched += 1;
        }
    }
    let elapsed = start.elapsed();
    (
        mismatched == 0 && elapsed < ZBUFFER_BUDGET,
        format!("50 scenes, {covered} covered pixels, {mismatched} scenes differ bit-wise, budget {ZBUFFER_BUDGET:?}"),
    )
}

fn gradient_vs_finite_differences() -> (bool, String) {
    let mut rng = common::rng(303);
    let trims = [0.0, 0.05, 0.1, 0.25];
    let mut worst = 0.0f64;
    let mut leaked = 0;
    let mut skipped = 0;
    for inst in 0..20 {
        let (rows, cols) = (rng.random_range(3..9), rng.random_range(3..9));
        let (x, h, mask) = common::random_packed(&mut rng, rows, cols, 0.7);
        let cfg = ConsistencyConfig {
            trim_fraction: trims[inst % trims.len()],
            depth_weight: rng.random_range(0.5..2.0),
            ..ConsistencyConfig::default()
        };
        let Some(base) = common::trimmed_loss_oracle(&x, &h, &mask, cfg.depth_weight, cfg.trim_fraction)
        else {
            continue;
        };
        let grad = warp_loss_gradient_packed(x.view(), h.view(), mask.view(), &cfg).unwrap();
        let loss = |x: &Array3<f64>| warp_loss_packed(x.view(), h.view(), mask.view(), &cfg).unwrap().loss;
        let (mut num, mut den) = (0.0, 0.0);
        for idx in 0..rows * cols {
            let (r, c) = (idx / cols, idx % cols);
            if base.kept.binary_search(&idx).is_err() {
                if (0..4).any(|k| grad[(r, c, k)] != 0.0) {
                    leaked += 1;
                }
                continue;
            }
            for k in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[(r, c, k)] += FD_STEP;
                xm[(r, c, k)] -= FD_STEP;
                let same = |y: &Array3<f64>| {
                    common::trimmed_loss_oracle(y, &h, &mask, cfg.depth_weight, cfg.trim_fraction)
                        .is_some_and(|o| o.kept == base.kept)
                };
                if !same(&xp) || !same(&xm) {
                    skipped += 1;
                    continue;
                }
                let fd = (loss(&xp) - loss(&xm)) / (2.0 * FD_STEP);
                num += (fd - grad[(r, c, k)]).powi(2);
                den += grad[(r, c, k)].powi(2);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    (
        worst < GRADIENT_REL && leaked == 0,
        format!("20 instances, max rel err {worst:.2e} (< {GRADIENT_REL:e}), {leaked} nonzero grads off the kept set, {skipped} coords skipped for selection flips"),
    )
}

fn trimming_oracle() -> (bool, String) {
    let mut rng = common::rng(404);
    let cfg = ConsistencyConfig::default();
    let mut mismatched = 0;
    for _ in 0..100 {
        let (rows, cols) = (rng.random_range(1..17), rng.random_range(1..17));
        let coverage = rng.random_range(0.2..1.0);
        let (x, h, mask) = common::random_packed(&mut rng, rows, cols, coverage);
        let got = warp_loss_packed(x.view(), h.view(), mask.view(), &cfg);
        let want = common::trimmed_loss_oracle(&x, &h, &mask, cfg.depth_weight, cfg.trim_fraction);
        match (got, want) {
            (Ok(g), Some(w)) if g.loss == w.loss && g.trimmed_pixels == w.trimmed && g.kept_pixels == w.kept.len() => {}
            (Err(scapegeom::Error::EmptyOverlap), None) => {}
            _ => mismatched += 1,
        }
    }

    let h = Array3::zeros((1, 100, 4));
    let mask = Array2::from_elem((1, 100), true);
    let mut y = Array3::zeros((1, 100, 4));
    for i in 0..100 {
        let d = if i == 37 { 10.0 } else { 0.1 };
        for k in 0..4 {
            y[(0, i, k)] = d;
        }
    }
    let small = warp_loss_packed(y.view(), h.view(), mask.view(), &cfg).unwrap();
    let outlier_case = (small.loss - 0.01).abs() <= 1e-15 && small.trimmed_pixels == 5;
    (
        mismatched == 0 && outlier_case,
        format!(
            "100 instances, {mismatched} differ; 99×0.1 + 1×10 diffs → {:.17} (0.01 ± 1e-15)",
            small.loss
        ),
    )
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var)
}

fn gaussian_marginal(schedule: &NoiseSchedule, seed: u64) -> (f64, f64) {
    let den = analytic_gaussian_denoiser(ORACLE_MU, ORACLE_SIGMA).unwrap();
    let draws = sample_batch(&den, schedule, (1, 1, 1), None, None, seed, SAMPLER_COUNT).unwrap();
    let xs: Vec<f64> = draws.iter().map(|a| a[(0, 0, 0)]).collect();
    mean_var(&xs)
}

fn guided_masked_mse(schedule: &NoiseSchedule) -> Vec<Vec<f64>> {
    let den = analytic_gaussian_denoiser(ORACLE_MU, ORACLE_SIGMA).unwrap();
    let target = Array3::from_elem((4, 4, 4), 0.8);
    let mask = Array2::from_shape_fn((4, 4), |(r, c)| r * 4 + c < 12);
    let cond = Condition { target, mask };
    GUIDANCE_WEIGHTS
        .iter()
        .map(|&w| {
            let g = GuidanceConfig::new(w);
            let draws =
                sample_batch(&den, schedule, (4, 4, 4), Some(&cond), Some(&g), 7, SAMPLER_COUNT).unwrap();
            draws
                .iter()
                .map(|x| {
                    let (mut s, mut n) = (0.0, 0.0);
                    for ((r, c, k), v) in x.indexed_iter() {
                        if cond.mask[(r, c)] {
                            s += (v - cond.target[(r, c, k)]).powi(2);
                            n += 1.0;
                        }
                    }
                    s / n
                })
                .collect()
        })
        .collect()
}

fn gaussian_sampler() -> (bool, String) {
    let start = Instant::now();
    let schedule = NoiseSchedule::scaled_linear(SAMPLER_STEPS, 1e-4, 0.02).unwrap();
    let (m, v) = gaussian_marginal(&schedule, 11);
    let mean_tol = 3.0 * ORACLE_SIGMA / (SAMPLER_COUNT as f64).sqrt();
    let mean_ok = (m - ORACLE_MU).abs() <= mean_tol;
    let ratio = v / (ORACLE_SIGMA * ORACLE_SIGMA);
    let var_ok = (ratio - 1.0).abs() <= VARIANCE_REL;

    let mse = guided_masked_mse(&schedule);
    let mut mono_ok = true;
    let mut means = Vec::new();
    for pair in mse.windows(2) {
        let diffs: Vec<f64> = pair[1].iter().zip(&pair[0]).map(|(b, a)| b - a).collect();
        let (dm, dv) = mean_var(&diffs);
        let se = (dv / diffs.len() as f64).sqrt();
        if dm > Z_95 * se {
            mono_ok = false;
        }
    }
    for run in &mse {
        means.push(format!("{:.4}", mean_var(run).0));
    }
    let elapsed = start.elapsed();
    (
        mean_ok && var_ok && mono_ok && elapsed < SAMPLER_BUDGET,
        format!(
            "T={SAMPLER_STEPS}: mean {m:.4} (|err| ≤ {mean_tol:.4}: {}), var/σ² {ratio:.4} (±{VARIANCE_REL}: {}), guided MSE over w {:?} = [{}] (non-increasing at 95%: {}), budget {SAMPLER_BUDGET:?}",
            ok(mean_ok),
            ok(var_ok),
            GUIDANCE_WEIGHTS,
            means.join(", "),
            ok(mono_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn keyframe_sequences() -> (bool, String) {
    let cfg = KeyframeSelectionConfig::default();
    let k = CameraIntrinsics::centered(10.0, 8, 6).unwrap();
    let line = Trajectory::new(
        k,
        (0..31).map(|i| Pose::from_translation(Vector3::new(0.0, 0.0, i as f64))).collect(),
    )
    .unwrap();
    let spin = Trajectory::new(k, (0..13).map(|i| Pose::yaw((5.0 * i as f64).to_radians())).collect()).unwrap();
    let a = select_keyframes(&line, &cfg).unwrap();
    let b = select_keyframes(&spin, &cfg).unwrap();
    (
        a == [0, 10, 20, 30] && b == [0, 4, 8, 12],
        format!("linear {a:?}, rotational {b:?}"),
    )
}

fn data_filtering() -> (bool, String) {
    let mut rng = common::rng(707);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=300);
        let losses: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut sorted = losses.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[0] < w[1]), "losses must be distinct");
        let kept = filter_dataset(&losses, 0.2).unwrap();
        let expected = n - n / 5;
        let dropped: Vec<usize> = (0..n).filter(|i| !kept.contains(i)).collect();
        let max_kept = kept.iter().map(|&i| losses[i]).fold(f64::NEG_INFINITY, f64::max);
        let min_dropped = dropped.iter().map(|&i| losses[i]).fold(f64::INFINITY, f64::min);
        if kept.len() != expected || max_kept > min_dropped || !kept.windows(2).all(|w| w[0] < w[1]) {
            bad += 1;
        }
    }
    (bad == 0, format!("1000 lists, drop 0.2, {bad} violations"))
}

fn end_to_end_pipeline() -> (bool, String) {
    let start = Instant::now();
    let (traj, initial) = Corridor::default().build().unwrap();
    let keys = select_keyframes(&traj, &KeyframeSelectionConfig::default()).unwrap();
    let opts = SceneOptions::default();
    let mut gen = CopyThroughGenerator::new(&opts.codec);
    let scene = generate_scene(&initial, 0, &traj, &keys, &mut gen, None, &opts).unwrap();
    let order = order_viewpoints(&traj, &keys, &traj.poses[0]).unwrap();

    let untrimmed = ConsistencyConfig::untrimmed();
    let mut losses = Vec::new();
    for kf in &scene.keyframes[1..] {
        let b = kf.bundle.as_ref().unwrap();
        losses.push(warp_loss(&kf.image, &b.image, &b.mask, &untrimmed).unwrap().loss);
    }
    let recorded: Vec<Option<f64>> = scene.keyframes.iter().map(|k| k.warp_loss).collect();
    let zero = losses.iter().all(|&l| l == 0.0) && recorded[1..].iter().all(|&l| l == Some(0.0));

    let dir = tempfile::tempdir().unwrap();
    let codec = DepthCodecConfig::default();
    write_scene(&scene, dir.path(), &codec).unwrap();
    let back = read_scene(dir.path()).unwrap();
    let max_depth = codec.max_depth;
    let mut worst = 0.0f64;
    let mut saturated = 0;
    let mut depth_err = |x: &f64, y: &f64| {
        if *x > max_depth {
            saturated += 1;
        }
        worst = worst.max((x.min(max_depth) - y).abs());
    };
    let mut exact_rgb = back.visit_order() == scene.visit_order() && back.cloud.len() == scene.cloud.len();
    for (a, b) in scene.keyframes.iter().zip(&back.keyframes) {
        exact_rgb &= a.image.rgb == b.image.rgb;
        a.image.depth.iter().zip(b.image.depth.iter()).for_each(|(x, y)| depth_err(x, y));
        match (&a.bundle, &b.bundle) {
            (Some(p), Some(q)) => {
                exact_rgb &= p.mask == q.mask && p.image.rgb == q.image.rgb;
                p.image.depth.iter().zip(q.image.depth.iter()).for_each(|(x, y)| depth_err(x, y));
            }
            (None, None) => {}
            _ => exact_rgb = false,
        }
    }
    let elapsed = start.elapsed();
    let generated: Vec<usize> = order.iter().copied().filter(|&i| i != 0).collect();
    let pass = scene.keyframes.len() == 4
        && generated == scene.visit_order()[1..]
        && zero
        && exact_rgb
        && worst <= codec.quantization_error()
        && elapsed < PIPELINE_BUDGET;
    (
        pass,
        format!(
            "visit order {:?}, step losses {losses:?}, rgb/mask round trip exact: {exact_rgb}, max depth err {worst:.2e} m (≤ {:.2e}) against min(d, {max_depth}) with {saturated} saturated pixels, budget {PIPELINE_BUDGET:?}",
            scene.visit_order(),
            codec.quantization_error()
        ),
    )
}

fn depth_codec_sweep() -> (bool, String) {
    let codec = DepthCodecConfig::default();
    let mut worst = 0.0f64;
    let mut code_mismatch = 0;
    for code in 0..=u16::MAX {
        let d = decode_depth16_value(code, &codec);
        if encode_depth16_value(d, &codec).unwrap() != code {
            code_mismatch += 1;
        }
        for probe in [d, d + 0.49 * 300.0 / 65535.0, d - 0.49 * 300.0 / 65535.0] {
            if !(0.0..=300.0).contains(&probe) {
                continue;
            }
            let back = decode_depth16_value(encode_depth16_value(probe, &codec).unwrap(), &codec);
            worst = worst.max((back - probe).abs());
        }
    }
    (
        code_mismatch == 0 && worst <= CODEC_BOUND,
        format!("65536 codes, {code_mismatch} code mismatches, max err {:.3} mm (≤ {:.3} mm)", worst * 1e3, CODEC_BOUND * 1e3),
    )
}

fn informative_long_schedule() {
    let start = Instant::now();
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let (m, v) = gaussian_marginal(&schedule, 12);
    println!(
        "INFO {:<28} {:>8.2}s  T=1000 linear: mean {m:.4}, var/σ² {:.4}",
        "gaussian sampler, long T",
        start.elapsed().as_secs_f64(),
        v / (ORACLE_SIGMA * ORACLE_SIGMA)
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let outcomes = [
        run("projection round trip", projection_round_trip),
        run("z-buffer oracle", zbuffer_oracle),
        run("warp-loss gradient", gradient_vs_finite_differences),
        run("trimming oracle", trimming_oracle),
        run("gaussian sampler", gaussian_sampler),
        run("keyframe selection", keyframe_sequences),
        run("data filtering", data_filtering),
        run("end-to-end pipeline", end_to_end_pipeline),
        run("depth codec sweep", depth_codec_sweep),
    ];
    informative_long_schedule();
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!(
        "acceptance: {} passed, {} failed",
        outcomes.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
