use std::fs;
use std::path::{Path, PathBuf};

use motion_attn::attention::AttentionMode;
use motion_attn::evaluation::{
    eval_windows, evaluate, evaluate_zero_velocity, export_attention, horizon_frames, noise_csv, noise_sweep,
    ErrorTable, Metric, DEFAULT_HORIZONS_MS, EVAL_STRIDE,
};
use motion_attn::fusion::PostFusionModel;
use motion_attn::model::{Forecaster, ModelConfig, MotionModel, PriorMode};
use motion_attn::pose::h36m;
use motion_attn::pose::{
    make_partition, synth_periodic, synth_repeat_after_gap, synth_triangle, Level, PartMap, PeriodicSpec,
    PoseSequence, RepeatSpec, Representation, TriangleSpec,
};
use motion_attn::selfcheck;
use motion_attn::training::{slice_windows, split_sources, train_base, train_fusion, LossKind, TrainConfig, Window};
use motion_attn::{Error, Result};

use crate::args::{
    AttnExportArgs, DataArgs, EvalArgs, GenDataArgs, ModelArgs, OptimArgs, PredictArgs, SelfcheckArgs, TrainArgs,
    TrainFusionArgs,
};

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| usage(format!("--{flag} is required")))
}

fn missing(path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} does not exist", path.display()),
    ))
}

fn parse_list<T: std::str::FromStr>(s: &str, flag: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| usage(format!("--{flag}: cannot parse {x:?}"))))
        .collect()
}

/// Expands comma-separated files and directories (their `.pose` files in
/// name order).
fn pose_paths(spec: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let p = PathBuf::from(item);
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|f| f.extension().is_some_and(|e| e == "pose"));
            files.sort();
            if files.is_empty() {
                return Err(missing(&p.join("*.pose")));
            }
            out.extend(files);
        } else if p.exists() {
            out.push(p);
        } else {
            return Err(missing(&p));
        }
    }
    if out.is_empty() {
        return Err(usage("no pose files given"));
    }
    Ok(out)
}

fn load_all(spec: &str) -> Result<Vec<PoseSequence>> {
    let seqs = pose_paths(spec)?
        .iter()
        .map(|p| PoseSequence::load(p))
        .collect::<Result<Vec<_>>>()?;
    let h = seqs[0].header();
    if let Some(s) = seqs.iter().find(|s| s.header() != h) {
        return Err(Error::ConfigMismatch(format!("pose files disagree: {h} vs {}", s.header())));
    }
    Ok(seqs)
}

fn load_checkpoint(path: &Path) -> Result<Forecaster> {
    if !path.exists() {
        return Err(missing(path));
    }
    Forecaster::load(path)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body)?;
    Ok(())
}

/// `pose.ckpt` → `pose.loss.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let kind = a.kind.clone().unwrap_or_else(|| "periodic".into());
    let out = required(&a.out, "out")?;
    let count = a.count.unwrap_or(1);
    let seed = a.seed.unwrap_or(0);
    let joints = a.joints.unwrap_or(6);
    let frames = a.frames.unwrap_or(200);
    let amplitude = a.amplitude.unwrap_or(1.0);
    let noise = a.noise.unwrap_or(0.0);
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let make = |s: u64| -> Result<PoseSequence> {
        match kind.as_str() {
            "periodic" => synth_periodic(&PeriodicSpec::random(joints, a.period.unwrap_or(20), frames, amplitude, noise, s)),
            "triangle" => {
                let range = match &a.periods {
                    Some(p) => match parse_list::<usize>(p, "periods")?.as_slice() {
                        [lo, hi] => (*lo, *hi),
                        _ => return Err(usage("--periods expects lo,hi")),
                    },
                    None => {
                        let p = a.period.unwrap_or(20);
                        (p, p)
                    }
                };
                synth_triangle(&TriangleSpec {
                    joints,
                    period_range: range,
                    amplitude,
                    frames,
                    noise,
                    seed: s,
                })
            }
            "repeat" => {
                let mut spec = RepeatSpec::new(joints, a.motif.unwrap_or(30), a.gap.unwrap_or(20), frames, s);
                spec.amplitude = amplitude;
                let (seq, _) = synth_repeat_after_gap(&spec)?;
                motion_attn::pose::add_noise(&seq, noise, s.wrapping_add(1))
            }
            other => Err(usage(format!("unknown --kind {other:?} (periodic, triangle, repeat)"))),
        }
    };
    if count == 1 {
        make(seed)?.save(&out)?;
    } else {
        fs::create_dir_all(&out)?;
        for i in 0..count {
            make(seed + i as u64)?.save(&out.join(format!("{kind}_{i:03}.pose")))?;
        }
    }
    Ok(())
}

fn part_map(path: &Option<PathBuf>, joints: usize) -> Result<PartMap> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(missing(p));
            }
            PartMap::parse(&fs::read_to_string(p)?)
        }
        None if joints == 22 => Ok(h36m::part_map_22()),
        None => Ok(PartMap::contiguous(joints)),
    }
}

fn model_config(m: &ModelArgs, levels: &[Level], prior: PriorMode, seq: &PoseSequence, seed: u64) -> Result<ModelConfig> {
    let k = seq.dim();
    let map = part_map(&m.part_map, seq.joints())?;
    let partitions = levels
        .iter()
        .map(|&l| make_partition(k, seq.dims(), l, Some(&map)))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = ModelConfig::new(seq.repr(), seq.joints(), seq.dims(), partitions[0].clone());
    cfg.partitions = partitions;
    cfg.prior = prior;
    let (mm, tt) = (m.m.unwrap_or(cfg.m), m.t.unwrap_or(cfg.t));
    cfg = cfg.with_horizon(mm, tt);
    if let Some(d) = m.d {
        cfg.d = d;
    }
    if let Some(f) = m.f {
        cfg.f = f;
    }
    if let Some(b) = m.blocks {
        cfg.blocks = b;
    }
    if let Some(n) = m.n_keep {
        cfg.n_keep = n;
    }
    if let Some(mode) = &m.mode {
        cfg.mode = AttentionMode::parse(mode)?;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(o: &OptimArgs, repr: Representation) -> Result<TrainConfig> {
    let loss = match &o.loss {
        Some(l) => LossKind::parse(l)?,
        None => LossKind::for_representation(repr),
    };
    let mut c = TrainConfig::new(loss);
    c.squared_loss = o.squared_loss;
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.batch {
        c.batch = v;
    }
    if let Some(v) = o.lr {
        c.lr = v;
    }
    if let Some(v) = o.lr_decay_epochs {
        c.lr_decay_epochs = v;
    }
    if let Some(v) = o.n {
        c.n = v;
    }
    if let Some(v) = o.stride {
        c.stride = v;
    }
    c.seed = o.seed.unwrap_or(0);
    c.validate()?;
    Ok(c)
}

/// Training and validation windows; without `--val-data`, 10% of the
/// sources are held out.
fn windows(d: &DataArgs, m: usize, t: usize, tc: &TrainConfig) -> Result<(Vec<Window>, Vec<Window>, PoseSequence)> {
    let train = load_all(&required(&d.data, "data")?)?;
    let first = train[0].clone();
    let (train, val) = match &d.val_data {
        Some(v) => {
            let val = load_all(v)?;
            if val[0].header() != first.header() {
                return Err(Error::ConfigMismatch("validation data differs from training data".into()));
            }
            (train, val)
        }
        None => split_sources(&train, 0.1, tc.seed),
    };
    let tw = slice_windows(&train, tc.n, m, t, tc.stride)?;
    let vw = slice_windows(&val, tc.n, m, t, EVAL_STRIDE)?;
    if tw.is_empty() {
        return Err(Error::HistoryTooShort {
            needed: tc.n + t,
            got: train.iter().map(PoseSequence::frames).max().unwrap_or(0),
        });
    }
    Ok((tw, vw, first))
}

fn levels(spec: &Option<String>) -> Result<Vec<Level>> {
    spec.as_deref().unwrap_or("pose").split(',').map(|s| Level::parse(s.trim())).collect()
}

fn report(label: &str, r: &motion_attn::training::TrainReport) {
    eprintln!("{label}: best epoch {} score {}", r.best_epoch, r.best_score);
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let out = required(&a.out, "out")?;
    let levels = levels(&a.model.level)?;
    let fusion = a.model.fusion.as_deref();
    let probe = load_all(&required(&a.data.data, "data")?)?;
    let seq = &probe[0];
    let mut tc = train_config(&a.optim, seq.repr())?;
    if let Some(e) = a.fusion_epochs {
        tc.fusion_epochs = e;
    }
    let seed = tc.seed;
    let prior = match (levels.len(), fusion) {
        (1, None) => PriorMode::Single,
        (1, Some(f)) => return Err(usage(format!("--fusion {f} needs several levels"))),
        (_, Some("concat")) => PriorMode::Concat,
        (_, Some("pre")) => PriorMode::Pre,
        (_, Some("post")) => PriorMode::Single,
        (_, Some(other)) => return Err(usage(format!("unknown --fusion {other:?} (concat, pre, post)"))),
        (_, None) => return Err(usage("several levels need --fusion concat|pre|post")),
    };
    let cfg0 = model_config(&a.model, &levels[..1], PriorMode::Single, seq, seed)?;
    let (tw, vw, _) = windows(&a.data, cfg0.m, cfg0.t, &tc)?;
    let loss_csv = sibling(&out, "loss.csv");
    if fusion == Some("post") {
        let mut bases = Vec::new();
        let mut csv = String::new();
        for &l in &levels {
            let mut m = MotionModel::new(model_config(&a.model, &[l], PriorMode::Single, seq, seed)?)?;
            let r = train_base(&mut m, &tw, &vw, &tc)?;
            report(l.as_str(), &r);
            csv.push_str(&format!("# {}\n{}", l.as_str(), r.to_csv()));
            bases.push(m);
        }
        let f = a.model.f.unwrap_or(cfg0.f);
        let mut post = PostFusionModel::new(bases, f, 1, seed)?;
        let r = train_fusion(&mut post, &tw, &vw, &tc)?;
        report("fusion", &r);
        csv.push_str(&format!("# fusion\n{}", r.to_csv()));
        post.save(&out)?;
        write(&loss_csv, &csv)
    } else {
        let mut m = MotionModel::new(model_config(&a.model, &levels, prior, seq, seed)?)?;
        let r = train_base(&mut m, &tw, &vw, &tc)?;
        report("model", &r);
        m.save(&out)?;
        write(&loss_csv, &r.to_csv())
    }
}

pub fn train_fusion_cmd(a: &TrainFusionArgs) -> Result<()> {
    let out = required(&a.out, "out")?;
    match a.fusion.as_deref() {
        None | Some("post") => {}
        Some(other) => return Err(usage(format!("train-fusion only trains post-fusion, got {other:?}"))),
    }
    let bases = parse_list::<PathBuf>(&required(&a.ckpt, "ckpt")?, "ckpt")?
        .iter()
        .map(|p| match load_checkpoint(p)? {
            Forecaster::Base(m) => Ok(m),
            Forecaster::Post(_) => Err(usage(format!("{} is already a fused checkpoint", p.display()))),
        })
        .collect::<Result<Vec<_>>>()?;
    let c = bases[0].config().clone();
    let mut tc = train_config(&a.optim, c.repr)?;
    tc.fusion_epochs = a.optim.epochs.unwrap_or(tc.fusion_epochs);
    let (tw, vw, seq) = windows(&a.data, c.m, c.t, &tc)?;
    if seq.dim() != c.k() {
        return Err(Error::ConfigMismatch(format!("data has {} coordinates, models {}", seq.dim(), c.k())));
    }
    let mut post = PostFusionModel::new(bases, a.f.unwrap_or(c.f), a.blocks.unwrap_or(1), tc.seed)?;
    let r = train_fusion(&mut post, &tw, &vw, &tc)?;
    report("fusion", &r);
    post.save(&out)?;
    write(&sibling(&out, "loss.csv"), &r.to_csv())
}

fn history_of(seq: &PoseSequence, n: usize) -> Result<motion_attn::numerics::Tensor> {
    if seq.frames() < n {
        return Err(Error::HistoryTooShort { needed: n, got: seq.frames() });
    }
    seq.trajectories().slice_cols(seq.frames() - n, seq.frames())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_checkpoint(&required(&a.ckpt, "ckpt")?)?;
    let data = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    if !data.exists() {
        return Err(missing(&data));
    }
    let seq = PoseSequence::load(&data)?;
    let history = history_of(&seq, a.n.unwrap_or(seq.frames()))?;
    let future = model.recursive_predict(&history, a.steps.unwrap_or(1))?.future;
    write(&out, &seq.from_trajectories_like(&future)?.to_text())
}

fn metric(repr: Representation) -> Metric {
    match repr {
        Representation::Xyz => Metric::Mpjpe,
        Representation::Expmap => Metric::Euler(None),
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let model = load_checkpoint(&required(&a.ckpt, "ckpt")?)?;
    let seqs = load_all(&required(&a.data, "data")?)?;
    let out = required(&a.out, "out")?;
    let fps = seqs[0].fps();
    let horizons = match &a.horizons {
        Some(h) => parse_list::<f64>(h, "horizons")?,
        None => DEFAULT_HORIZONS_MS.to_vec(),
    };
    let horizon = horizon_frames(&horizons, fps)?.into_iter().max().unwrap_or(1);
    let n = a.n.unwrap_or(50);
    let windows = eval_windows(&seqs, n, horizon, EVAL_STRIDE)?;
    if windows.is_empty() {
        return Err(Error::HistoryTooShort {
            needed: n + horizon,
            got: seqs.iter().map(PoseSequence::frames).max().unwrap_or(0),
        });
    }
    let metric = metric(seqs[0].repr());
    let body = match &a.sigmas {
        Some(s) => {
            let sigmas = parse_list::<f64>(s, "sigmas")?;
            noise_csv(&noise_sweep(&model, &windows, &sigmas, a.seed.unwrap_or(0), &horizons, fps, &metric)?)
        }
        None => {
            let m = evaluate(&model, &windows, &horizons, fps, &metric)?;
            let z = evaluate_zero_velocity(&windows, &horizons, fps, &metric)?;
            ErrorTable::join(&[("model".into(), m), ("zero_velocity".into(), z)])?.to_csv()
        }
    };
    write(&out, &body)
}

pub fn attn_export(a: &AttnExportArgs) -> Result<()> {
    let model = load_checkpoint(&required(&a.ckpt, "ckpt")?)?;
    let data = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    if !data.exists() {
        return Err(missing(&data));
    }
    let seq = PoseSequence::load(&data)?;
    let coords = match &a.coords {
        Some(c) => parse_list::<usize>(c, "coords")?,
        None => (0..seq.dim().min(3)).collect(),
    };
    let n = a.n.unwrap_or(50);
    let export = export_attention(&model, &seq, n, a.steps.unwrap_or(1), &coords)?;
    fs::create_dir_all(&out)?;
    for (name, csv) in &export.maps {
        write(&out.join(name), csv)?;
    }
    write(&out.join("trajectory.csv"), &export.trajectory)
}

/// Prints one line per suite; `Ok(false)` when any failed.
pub fn selfcheck_cmd(a: &SelfcheckArgs) -> Result<bool> {
    let results = selfcheck::run_all(a.seed.unwrap_or(0))?;
    for r in &results {
        println!("{}", r.line());
    }
    Ok(results.iter().all(|r| r.passed))
}
