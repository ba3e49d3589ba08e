//! Acceptance criteria. Every criterion prints a single `PASS`/`FAIL` line
//! with its measurements; the process fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use motion_attn::attention::AttentionMode;
use motion_attn::evaluation::{
    eval_windows, evaluate, evaluate_zero_velocity, noise_sweep, zero_velocity, EvalWindow, Metric,
};
use motion_attn::fusion::PostFusionModel;
use motion_attn::model::{Forecaster, ModelConfig, MotionModel};
use motion_attn::numerics::Tensor;
use motion_attn::pose::{
    h36m, make_partition, synth_periodic, synth_repeat_after_gap, synth_triangle, Level, PartMap, PeriodicSpec,
    PoseSequence, RepeatSpec, Representation, TriangleSpec,
};
use motion_attn::selfcheck;
use motion_attn::training::{future_error, slice_windows, train_base, train_fusion, LossKind, TrainConfig};

fn verdict(id: u32, name: &str, passed: bool, detail: String) -> bool {
    println!("{} [{id}] {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

fn small_model(joints: usize, level: Level, map: Option<&PartMap>, m: usize, t: usize, seed: u64) -> ModelConfig {
    let part = make_partition(3 * joints, 3, level, map).unwrap();
    let mut cfg = ModelConfig::new(Representation::Xyz, joints, 3, part).with_horizon(m, t);
    cfg.d = 16;
    cfg.f = 32;
    cfg.blocks = 2;
    cfg.seed = seed;
    cfg
}

fn train_config(epochs: usize, lr: f64) -> TrainConfig {
    let mut tc = TrainConfig::new(LossKind::Mpjpe);
    tc.epochs = epochs;
    tc.lr = lr;
    tc
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn criterion_01_dct_roundtrip() -> bool {
    let start = Instant::now();
    let r = selfcheck::dct_roundtrip(1000, &[4, 8, 20, 64], 1).unwrap();
    let elapsed = start.elapsed();
    verdict(1, "DCT roundtrip", r.passed && elapsed < Duration::from_secs(5), format!("{}, {elapsed:.2?}", r.detail))
}

fn criterion_02_gradient_integrity() -> bool {
    let start = Instant::now();
    let r = selfcheck::gradient_check(&[1, 2, 3, 4, 5]).unwrap();
    let elapsed = start.elapsed();
    verdict(
        2,
        "gradient integrity",
        r.passed && elapsed < Duration::from_secs(120),
        format!("{}, {elapsed:.2?}", r.detail),
    )
}

fn criterion_03_attention_invariants() -> bool {
    let r = selfcheck::attention_invariants(10_000, 3).unwrap();
    verdict(3, "attention invariants", r.passed, r.detail)
}

/// A model whose every parameter is zero forecasts the last observed pose,
/// bit for bit, at every attention level and through recursion.
fn criterion_04_residual_identity() -> bool {
    let seq = synth_periodic(&PeriodicSpec::random(22, 20, 120, 100.0, 5.0, 4)).unwrap();
    let windows = eval_windows(&[seq], 50, 25, 5).unwrap();
    let map = h36m::part_map_22();
    let mut checked = 0;
    let mut exact = true;
    for level in [Level::Pose, Level::Part, Level::Joint] {
        let mut cfg = small_model(22, level, Some(&map), 10, 10, 1);
        cfg.d = 8;
        let mut model = MotionModel::new(cfg).unwrap();
        model.store_mut().zero_all();
        for w in &windows {
            let out = model.recursive_predict(&w.history, 3).unwrap().future;
            exact &= out.slice_cols(0, 25).unwrap() == zero_velocity(&w.history, 25).unwrap();
            checked += 1;
        }
        let f = Forecaster::Base(model);
        let h = [80.0, 400.0, 1000.0];
        let a = evaluate(&f, &windows, &h, 25.0, &Metric::Mpjpe).unwrap();
        let b = evaluate_zero_velocity(&windows, &h, 25.0, &Metric::Mpjpe).unwrap();
        exact &= a == b;
    }
    verdict(4, "residual identity", exact, format!("{checked} windows at 3 levels, recursive to 25 frames, bitwise"))
}

/// Argmax key offset from the query, in frames modulo the period.
fn argmax_offset(row: &[f64], n: usize, m: usize, period: usize) -> usize {
    let best = (0..row.len()).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
    (n - m - best) % period
}

fn criterion_05_periodic_learning() -> bool {
    let (n, m, t, period) = (50, 10, 10, 20);
    let start = Instant::now();
    let train: Vec<PoseSequence> = (0..40)
        .map(|s| synth_periodic(&PeriodicSpec::random(6, period, 100, 1.0, 0.0, 100 + s)).unwrap())
        .collect();
    let val: Vec<PoseSequence> = (0..4)
        .map(|s| synth_periodic(&PeriodicSpec::random(6, period, 100, 1.0, 0.0, 700 + s)).unwrap())
        .collect();
    let test: Vec<PoseSequence> = (0..3)
        .map(|s| synth_periodic(&PeriodicSpec::random(6, period, 200, 1.0, 0.0, 900 + s)).unwrap())
        .collect();
    let part = make_partition(18, 3, Level::Pose, None).unwrap();
    let mut cfg = ModelConfig::new(Representation::Xyz, 6, 3, part);
    cfg.seed = 1;
    assert_eq!((cfg.d, cfg.f, cfg.blocks, cfg.m, cfg.t), (32, 64, 4, m, t));
    let mut model = MotionModel::new(cfg).unwrap();
    let mut tc = train_config(30, 5e-4);
    tc.stride = 3;
    let tw = slice_windows(&train, n, m, t, tc.stride).unwrap();
    let vw = slice_windows(&val, n, m, t, 5).unwrap();
    train_base(&mut model, &tw, &vw, &tc).unwrap();

    let windows = eval_windows(&test, n, t, 5).unwrap();
    let h = [80.0, 160.0, 240.0, 320.0, 400.0];
    let f = Forecaster::Base(model.clone());
    let e = evaluate(&f, &windows, &h, 25.0, &Metric::Mpjpe).unwrap().mean_up_to(400.0);
    let z = evaluate_zero_velocity(&windows, &h, 25.0, &Metric::Mpjpe).unwrap().mean_up_to(400.0);
    let gain = 1.0 - e / z;
    let aligned = windows
        .iter()
        .filter(|w| {
            let p = model.predict(&w.history).unwrap();
            let off = argmax_offset(&p.attention[0].parts[0][0], n, m, period);
            off <= 1 || off >= period - 1
        })
        .count();
    let share = aligned as f64 / windows.len() as f64;
    let elapsed = start.elapsed();
    verdict(
        5,
        "periodic learning",
        gain >= 0.5 && share >= 0.9 && elapsed < Duration::from_secs(600),
        format!(
            "improvement over zero-velocity {gain:.3} (need >= 0.5), period-aligned argmax {aligned}/{} = {share:.3} (need >= 0.9), {elapsed:.1?}",
            windows.len()
        ),
    )
}

fn triangles(seed: u64, count: u64) -> Vec<PoseSequence> {
    (0..count)
        .map(|i| {
            synth_triangle(&TriangleSpec {
                joints: 1,
                period_range: (16, 28),
                amplitude: 1.0,
                frames: 120,
                noise: 0.05,
                seed: seed * 100 + i,
            })
            .unwrap()
        })
        .collect()
}

/// Every pose of a triangle wave is visited once rising and once falling.
/// Short observed windows (`M = 4`) leave the timing of the next turn to the
/// retrieved continuation.
fn criterion_06_motion_beats_frame_wise() -> bool {
    let h = [40.0, 80.0, 160.0, 240.0, 320.0, 400.0];
    let mut all = true;
    let mut detail = Vec::new();
    for seed in 1..=3u64 {
        let train = triangles(seed, 40);
        let test: Vec<PoseSequence> = (0..20)
            .map(|i| triangles(seed * 100 + 50 + i, 1).remove(0))
            .collect();
        let mut errs = Vec::new();
        for mode in [AttentionMode::Motion, AttentionMode::FrameWise] {
            let mut cfg = small_model(1, Level::Pose, None, 4, 10, seed);
            cfg.mode = mode;
            let mut model = MotionModel::new(cfg).unwrap();
            let w = slice_windows(&train, 50, 4, 10, 3).unwrap();
            train_base(&mut model, &w, &[], &train_config(40, 1e-2)).unwrap();
            let ew = eval_windows(&test, 50, 10, 5).unwrap();
            errs.push(evaluate(&Forecaster::Base(model), &ew, &h, 25.0, &Metric::Mpjpe).unwrap().first());
        }
        let ok = errs[0].iter().zip(&errs[1]).all(|(a, b)| a < b);
        all &= ok;
        detail.push(format!("seed {seed}: motion {:?} frame-wise {:?}", round(&errs[0]), round(&errs[1])));
    }
    verdict(6, "motion vs frame-wise attention", all, detail.join("; "))
}

fn repeat(seed: u64, motif: usize, gap: usize, lead: usize, frames: usize) -> (PoseSequence, usize) {
    let mut spec = RepeatSpec::new(1, motif, gap, frames, seed);
    spec.amplitude = 1.0;
    spec.lead_len = lead;
    let (seq, layout) = synth_repeat_after_gap(&spec).unwrap();
    (seq, layout.second_start)
}

/// Trained with `N = 40` on back-to-back repeats, then evaluated where the
/// query starts the second occurrence of a motif whose first occurrence is
/// 55 frames back: inside a `2N` history, outside an `N` one.
fn criterion_07_long_history() -> bool {
    let (m, t, n) = (4, 10, 40);
    let mut all = true;
    let mut detail = Vec::new();
    for seed in 1..=3u64 {
        let train: Vec<PoseSequence> = (0..40).map(|i| repeat(seed * 1000 + i, 30, 0, 10, 100).0).collect();
        let mut model = MotionModel::new(small_model(1, Level::Pose, None, m, t, seed)).unwrap();
        let w = slice_windows(&train, n, m, t, 2).unwrap();
        train_base(&mut model, &w, &[], &train_config(30, 1e-2)).unwrap();
        let (mut short, mut long) = (Vec::new(), Vec::new());
        for i in 0..20 {
            let (seq, second) = repeat(seed * 1000 + 500 + i, 30, 25, 25, 115);
            let traj = seq.trajectories();
            for j in 0..=(30 - m - t) {
                let end = second + m + j;
                let window = |len: usize| EvalWindow {
                    history: traj.slice_cols(end - len, end).unwrap(),
                    future: traj.slice_cols(end, end + t).unwrap(),
                    source: i as usize,
                    start: end - len,
                };
                short.push(window(n));
                long.push(window(2 * n));
            }
        }
        let f = Forecaster::Base(model);
        let h = [400.0];
        let a = evaluate(&f, &short, &h, 25.0, &Metric::Mpjpe).unwrap().first()[0];
        let b = evaluate(&f, &long, &h, 25.0, &Metric::Mpjpe).unwrap().first()[0];
        all &= b < a;
        detail.push(format!("seed {seed}: N {a:.4} -> 2N {b:.4}"));
    }
    verdict(7, "long-history benefit", all, detail.join("; "))
}

/// Unit-amplitude data, so absolute sigmas are amplitude-relative.
fn criterion_08_noise_monotonicity() -> bool {
    let train: Vec<PoseSequence> = (0..20)
        .map(|i| synth_periodic(&PeriodicSpec::random(2, 20, 100, 1.0, 0.0, 100 + i)).unwrap())
        .collect();
    let test: Vec<PoseSequence> = (0..10)
        .map(|i| synth_periodic(&PeriodicSpec::random(2, 20, 100, 1.0, 0.0, 150 + i)).unwrap())
        .collect();
    let mut model = MotionModel::new(small_model(2, Level::Pose, None, 10, 10, 1)).unwrap();
    let w = slice_windows(&train, 50, 10, 10, 3).unwrap();
    train_base(&mut model, &w, &[], &train_config(20, 3e-3)).unwrap();
    let f = Forecaster::Base(model);
    let ew = eval_windows(&test, 50, 10, 5).unwrap();
    let sigmas = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];
    let h = [40.0, 80.0, 160.0, 240.0, 320.0, 400.0];
    let mut mean = vec![vec![0.0; h.len()]; sigmas.len()];
    for seed in 0..5 {
        for (i, (_, table)) in noise_sweep(&f, &ew, &sigmas, seed, &h, 25.0, &Metric::Mpjpe).unwrap().iter().enumerate() {
            for (acc, v) in mean[i].iter_mut().zip(table.first()) {
                *acc += v / 5.0;
            }
        }
    }
    let monotone = (0..h.len()).all(|c| mean.windows(2).all(|p| p[1][c] >= p[0][c]));
    let rows: Vec<String> = sigmas.iter().zip(&mean).map(|(s, r)| format!("{s}: {:?}", round(r))).collect();
    verdict(8, "noise monotonicity", monotone, rows.join("; "))
}

/// Coordinates of joints 0-1 follow period-20 sinusoids, joints 2-3 a
/// triangle wave of another period; every coordinate sits at its own rest
/// offset, as joint positions do.
fn mixture(seed: u64) -> PoseSequence {
    let frames = 100;
    let a = synth_periodic(&PeriodicSpec::random(2, 20, frames, 1.0, 0.05, seed)).unwrap();
    let b = synth_triangle(&TriangleSpec {
        joints: 2,
        period_range: (14, 30),
        amplitude: 1.0,
        frames,
        noise: 0.05,
        seed: seed + 7777,
    })
    .unwrap();
    let mut traj = Tensor::concat_rows(&[&a.trajectories(), &b.trajectories()]).unwrap();
    for r in 0..12 {
        let offset = ((r * 7 % 5) as f64 - 2.0) * 1.0;
        for c in 0..frames {
            traj.set(r, c, traj.get(r, c) + offset);
        }
    }
    PoseSequence::new(Representation::Xyz, 4, 3, 25.0, traj.transpose().unwrap()).unwrap()
}

fn criterion_09_fusion_contract() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let train: Vec<PoseSequence> = (0..30).map(|i| mixture(100 + i)).collect();
    let val: Vec<PoseSequence> = (0..8).map(|i| mixture(160 + i)).collect();
    let tw = slice_windows(&train, 50, 10, 10, 3).unwrap();
    let vw = slice_windows(&val, 50, 10, 10, 5).unwrap();
    let map = PartMap::parse("upper: 0, 1\nlower: 2, 3\n").unwrap();
    let tc = train_config(20, 3e-3);
    let mut bases = Vec::new();
    let mut single = Vec::new();
    for level in [Level::Pose, Level::Part, Level::Joint] {
        let mut model = MotionModel::new(small_model(4, level, Some(&map), 10, 10, 1)).unwrap();
        single.push(train_base(&mut model, &tw, &vw, &tc).unwrap().best_score);
        bases.push(model);
    }
    let paths: Vec<_> = (0..3).map(|i| dir.path().join(format!("base{i}.ckpt"))).collect();
    for (b, p) in bases.iter().zip(&paths) {
        b.save(p).unwrap();
    }
    let before: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();

    let mut post = PostFusionModel::new(bases, 32, 1, 1).unwrap();
    let mut fc = tc.clone();
    fc.lr = 1e-2;
    fc.fusion_epochs = 20;
    train_fusion(&mut post, &tw, &vw, &fc).unwrap();
    for (b, p) in post.bases().iter().zip(&paths) {
        b.save(p).unwrap();
    }
    let frozen = paths.iter().zip(&before).all(|(p, b)| &std::fs::read(p).unwrap() == b);

    let mut preds = Vec::new();
    let mut worst = 0.0f64;
    let mut negative = false;
    let mut mean_weight = [0.0; 3];
    for w in &vw {
        let p = post.predict(&w.history).unwrap();
        let weights = p.weights.unwrap();
        for r in 0..weights.rows() {
            let row = weights.row(r);
            negative |= row.iter().any(|&v| v < 0.0);
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            for (acc, v) in mean_weight.iter_mut().zip(row) {
                *acc += v / (weights.rows() * vw.len()) as f64;
            }
        }
        preds.push(p.poses);
    }
    let fused = future_error(LossKind::Mpjpe, &preds, &vw, 10).unwrap();
    let best = single.iter().cloned().fold(f64::INFINITY, f64::min);
    let valid = !negative && worst < 1e-9;
    verdict(
        9,
        "fusion contract",
        valid && frozen && fused <= 1.05 * best,
        format!(
            "weights convex (max |sum-1| {worst:.1e}, negative {negative}), bases bitwise frozen {frozen}, \
             validation pose/part/joint {:?} fused {fused:.4} = {:.3} x best, mean weights {:?}",
            round(&single),
            fused / best,
            round(&mean_weight)
        ),
    )
}

fn run(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_motionattn"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.join(format!("stdout_{}.txt", args[0])), out.stdout).unwrap();
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_10_determinism() -> bool {
    let pipeline: &[&[&str]] = &[
        &["gen-data", "--kind", "periodic", "--frames", "100", "--joints", "2", "--count", "4", "--seed", "3", "--out", "data"],
        &["train", "--data", "data", "--level", "pose", "--d", "8", "--F", "16", "--blocks", "1", "--epochs", "2", "--seed", "5", "--out", "pose.ckpt"],
        &["train", "--data", "data", "--level", "joint", "--d", "8", "--F", "16", "--blocks", "1", "--epochs", "2", "--seed", "5", "--out", "joint.ckpt"],
        &["train-fusion", "--ckpt", "pose.ckpt,joint.ckpt", "--data", "data", "--epochs", "2", "--seed", "5", "--out", "post.ckpt"],
        &["predict", "--ckpt", "post.ckpt", "--data", "data/periodic_000.pose", "--N", "50", "--steps", "3", "--out", "pred.pose"],
        &["eval", "--ckpt", "pose.ckpt", "--data", "data", "--horizons", "80,400", "--out", "eval.csv"],
        &["eval", "--ckpt", "pose.ckpt", "--data", "data", "--horizons", "80,400", "--sigmas", "0,0.05", "--seed", "2", "--out", "noise.csv"],
        &["attn-export", "--ckpt", "post.ckpt", "--data", "data/periodic_001.pose", "--steps", "2", "--out", "attn"],
        &["selfcheck", "--seed", "4"],
    ];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            for args in pipeline {
                run(dir.path(), args);
            }
            snapshot(dir.path())
        })
        .collect();
    let files = runs[0].len();
    let same = runs[0] == runs[1];
    verdict(10, "determinism", same && files > 10, format!("{} commands, {files} artifacts byte-identical: {same}", pipeline.len()))
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let all: [(&str, fn() -> bool); 10] = [
        ("criterion_01_dct_roundtrip", criterion_01_dct_roundtrip),
        ("criterion_02_gradient_integrity", criterion_02_gradient_integrity),
        ("criterion_03_attention_invariants", criterion_03_attention_invariants),
        ("criterion_04_residual_identity", criterion_04_residual_identity),
        ("criterion_05_periodic_learning", criterion_05_periodic_learning),
        ("criterion_06_motion_beats_frame_wise", criterion_06_motion_beats_frame_wise),
        ("criterion_07_long_history", criterion_07_long_history),
        ("criterion_08_noise_monotonicity", criterion_08_noise_monotonicity),
        ("criterion_09_fusion_contract", criterion_09_fusion_contract),
        ("criterion_10_determinism", criterion_10_determinism),
    ];
    let mut failed = 0;
    for (name, run) in all {
        if !only.is_empty() && !only.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        if !run() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
