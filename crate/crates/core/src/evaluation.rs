//! Error tables at fixed horizons, baselines, history-length and noise
//! experiments, and attention export.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AttentionTrace, Forecaster};
use crate::numerics::Tensor;
use crate::pose::skeleton::{rodrigues, Mat3};
use crate::pose::synth::noisy;
use crate::pose::{PoseSequence, RemovedCoords};

/// Horizons in milliseconds reported by default (25 fps grid).
pub const DEFAULT_HORIZONS_MS: [f64; 8] = [80.0, 160.0, 320.0, 400.0, 560.0, 720.0, 880.0, 1000.0];

/// Start frames of evaluation windows are this far apart.
pub const EVAL_STRIDE: usize = 5;

/// Converts horizons to 1-based future frame indices; each must land on a
/// whole frame.
pub fn horizon_frames(horizons_ms: &[f64], fps: f64) -> Result<Vec<usize>> {
    horizons_ms
        .iter()
        .map(|&ms| {
            let f = ms * fps / 1000.0;
            let r = f.round();
            if r < 1.0 || (f - r).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "horizon {ms} ms is not a whole number of frames at {fps} fps"
                )));
            }
            Ok(r as usize)
        })
        .collect()
}

/// Formats with 6 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

fn fmt_horizon(ms: f64) -> String {
    if ms.fract() == 0.0 {
        format!("{ms:.0}")
    } else {
        fmt_sig(ms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub horizons_ms: Vec<f64>,
    pub columns: Vec<String>,
    /// `values[h][c]`.
    pub values: Vec<Vec<f64>>,
    /// Number of evaluation windows averaged.
    pub windows: usize,
}

impl ErrorTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[c]).collect())
    }

    /// First column, one value per horizon.
    pub fn first(&self) -> Vec<f64> {
        self.values.iter().map(|row| row[0]).collect()
    }

    /// Mean of the first column over horizons up to `max_ms`.
    pub fn mean_up_to(&self, max_ms: f64) -> f64 {
        let vals: Vec<f64> = self
            .horizons_ms
            .iter()
            .zip(&self.values)
            .filter(|(h, _)| **h <= max_ms + 1e-9)
            .map(|(_, row)| row[0])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("horizon_ms");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (h, row) in self.horizons_ms.iter().zip(&self.values) {
            s.push_str(&fmt_horizon(*h));
            for v in row {
                s.push(',');
                s.push_str(&fmt_sig(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Window-count-weighted average of two tables with the same layout.
    pub fn merge(&self, other: &ErrorTable) -> Result<ErrorTable> {
        if self.horizons_ms != other.horizons_ms || self.columns != other.columns {
            return Err(Error::InvalidArgument("tables have different layouts".into()));
        }
        let n = self.windows + other.windows;
        if n == 0 {
            return Ok(self.clone());
        }
        let (wa, wb) = (self.windows as f64 / n as f64, other.windows as f64 / n as f64);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect())
            .collect();
        Ok(ErrorTable {
            horizons_ms: self.horizons_ms.clone(),
            columns: self.columns.clone(),
            values,
            windows: n,
        })
    }

    /// Columns of `tables` side by side (same horizons).
    pub fn join(tables: &[(String, ErrorTable)]) -> Result<ErrorTable> {
        let first = &tables.first().ok_or_else(|| Error::InvalidArgument("nothing to join".into()))?.1;
        let mut columns = Vec::new();
        let mut values = vec![Vec::new(); first.horizons_ms.len()];
        for (name, t) in tables {
            if t.horizons_ms != first.horizons_ms {
                return Err(Error::InvalidArgument("tables have different horizons".into()));
            }
            for c in &t.columns {
                columns.push(if t.columns.len() == 1 { name.clone() } else { format!("{name}:{c}") });
            }
            for (row, src) in values.iter_mut().zip(&t.values) {
                row.extend_from_slice(src);
            }
        }
        Ok(ErrorTable {
            horizons_ms: first.horizons_ms.clone(),
            columns,
            values,
            windows: tables.iter().map(|(_, t)| t.windows).sum(),
        })
    }
}

fn check_pairs(preds: &[Tensor], gts: &[Tensor], frames: &[usize]) -> Result<()> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth windows",
            preds.len(),
            gts.len()
        )));
    }
    let max_h = frames.iter().copied().max().unwrap_or(0);
    for (p, g) in preds.iter().zip(gts) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "evaluation",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if p.cols() < max_h {
            return Err(Error::InvalidArgument(format!(
                "horizon of {max_h} frames beyond the {}-frame prediction",
                p.cols()
            )));
        }
        if p.rows() % 3 != 0 {
            return Err(Error::InvalidArgument(format!("{} coordinates are not joint triples", p.rows())));
        }
    }
    Ok(())
}

/// Per-joint distances at frame column `c`.
fn joint_distances(p: &Tensor, g: &Tensor, c: usize) -> Vec<f64> {
    (0..p.rows() / 3)
        .map(|j| {
            (0..3)
                .map(|d| {
                    let e = p.get(3 * j + d, c) - g.get(3 * j + d, c);
                    e * e
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn table(horizons_ms: &[f64], columns: Vec<String>, per_window: Vec<Vec<Vec<f64>>>) -> ErrorTable {
    let n = per_window.len();
    let mut values = vec![vec![0.0; columns.len()]; horizons_ms.len()];
    for w in &per_window {
        for (acc, row) in values.iter_mut().zip(w) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    for row in &mut values {
        row.iter_mut().for_each(|v| *v /= n as f64);
    }
    ErrorTable {
        horizons_ms: horizons_ms.to_vec(),
        columns,
        values,
        windows: n,
    }
}

/// Mean joint distance at each horizon. Predictions and ground truth are
/// `K × frames` future matrices starting at the first future frame.
pub fn mpjpe_at_horizons(preds: &[Tensor], gts: &[Tensor], horizons_ms: &[f64], fps: f64) -> Result<ErrorTable> {
    let frames = horizon_frames(horizons_ms, fps)?;
    check_pairs(preds, gts, &frames)?;
    let per_window = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            frames
                .iter()
                .map(|&h| {
                    let d = joint_distances(p, g, h - 1);
                    vec![d.iter().sum::<f64>() / d.len() as f64]
                })
                .collect()
        })
        .collect();
    Ok(table(horizons_ms, vec!["mpjpe".into()], per_window))
}

/// Per-joint distances, one `name(index)` column per joint.
pub fn per_joint_mpjpe(preds: &[Tensor], gts: &[Tensor], horizons_ms: &[f64], fps: f64, names: &[String]) -> Result<ErrorTable> {
    let frames = horizon_frames(horizons_ms, fps)?;
    check_pairs(preds, gts, &frames)?;
    let joints = preds[0].rows() / 3;
    let columns = (0..joints)
        .map(|j| format!("{}({j})", names.get(j).map_or("joint", String::as_str)))
        .collect();
    let per_window = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| frames.iter().map(|&h| joint_distances(p, g, h - 1)).collect())
        .collect();
    Ok(table(horizons_ms, columns, per_window))
}

/// Euler angles `(φ, θ, ψ)` with `R = Rz(ψ) · Ry(θ) · Rx(φ)`. At gimbal lock
/// (`|θ| = π/2`) `ψ` is set to zero and `φ` absorbs the remaining rotation.
pub fn rotmat_to_euler(r: &Mat3) -> [f64; 3] {
    use std::f64::consts::FRAC_PI_2;
    let s = r[2][0];
    if s <= -1.0 + 1e-12 {
        [r[0][1].atan2(r[0][2]), FRAC_PI_2, 0.0]
    } else if s >= 1.0 - 1e-12 {
        [(-r[0][1]).atan2(-r[0][2]), -FRAC_PI_2, 0.0]
    } else {
        [r[2][1].atan2(r[2][2]), -s.asin(), r[1][0].atan2(r[0][0])]
    }
}

/// `Rz(ψ) · Ry(θ) · Rx(φ)`.
pub fn euler_to_rotmat(e: [f64; 3]) -> Mat3 {
    let (sx, cx) = e[0].sin_cos();
    let (sy, cy) = e[1].sin_cos();
    let (sz, cz) = e[2].sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

fn euler_column(m: &Tensor, c: usize) -> Vec<f64> {
    (0..m.rows() / 3)
        .flat_map(|j| rotmat_to_euler(&rodrigues([m.get(3 * j, c), m.get(3 * j + 1, c), m.get(3 * j + 2, c)])))
        .collect()
}

/// Euclidean distance between Euler-angle vectors at each horizon.
/// Inputs are `K × frames` exp-map matrices with whole joint triples.
pub fn euler_error_at_horizons(preds: &[Tensor], gts: &[Tensor], horizons_ms: &[f64], fps: f64) -> Result<ErrorTable> {
    let frames = horizon_frames(horizons_ms, fps)?;
    check_pairs(preds, gts, &frames)?;
    let per_window = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            frames
                .iter()
                .map(|&h| {
                    let (a, b) = (euler_column(p, h - 1), euler_column(g, h - 1));
                    vec![a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()]
                })
                .collect()
        })
        .collect();
    Ok(table(horizons_ms, vec!["euler".into()], per_window))
}

/// The last observed pose repeated `t` times, `K × t`.
pub fn zero_velocity(history: &Tensor, t: usize) -> Result<Tensor> {
    let (k, n) = history.expect_matrix("zero_velocity")?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty history".into()));
    }
    let mut data = Vec::with_capacity(k * t);
    for r in 0..k {
        data.extend(std::iter::repeat_n(history.get(r, n - 1), t));
    }
    Tensor::matrix(k, t, data)
}

/// A history and the frames that follow it.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalWindow {
    /// `K × N`.
    pub history: Tensor,
    /// `K × horizon`.
    pub future: Tensor,
    pub source: usize,
    pub start: usize,
}

/// Windows of `n` history and `horizon` future frames, starting every
/// `stride` frames.
pub fn eval_windows(seqs: &[PoseSequence], n: usize, horizon: usize, stride: usize) -> Result<Vec<EvalWindow>> {
    let mut out = Vec::new();
    for (source, seq) in seqs.iter().enumerate() {
        if seq.frames() < n + horizon {
            continue;
        }
        let traj = seq.trajectories();
        for start in (0..=seq.frames() - n - horizon).step_by(stride.max(1)) {
            out.push(EvalWindow {
                history: traj.slice_cols(start, start + n)?,
                future: traj.slice_cols(start + n, start + n + horizon)?,
                source,
                start,
            });
        }
    }
    Ok(out)
}

/// Which error to tabulate.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Mpjpe,
    /// Euler-angle error; dropped coordinates are restored first when given.
    Euler(Option<RemovedCoords>),
}

impl Metric {
    pub fn table(&self, preds: &[Tensor], gts: &[Tensor], horizons_ms: &[f64], fps: f64) -> Result<ErrorTable> {
        match self {
            Metric::Mpjpe => mpjpe_at_horizons(preds, gts, horizons_ms, fps),
            Metric::Euler(None) => euler_error_at_horizons(preds, gts, horizons_ms, fps),
            Metric::Euler(Some(rem)) => {
                let p: Vec<Tensor> = preds.iter().map(|t| restore_rows(t, rem)).collect();
                let g: Vec<Tensor> = gts.iter().map(|t| restore_rows(t, rem)).collect();
                euler_error_at_horizons(&p, &g, horizons_ms, fps)
            }
        }
    }
}

/// Re-inserts dropped coordinate rows of a `K' × n` matrix.
pub fn restore_rows(m: &Tensor, rem: &RemovedCoords) -> Tensor {
    let k0 = rem.original_joints * rem.original_dims;
    let n = m.cols();
    let mut data = Vec::with_capacity(k0 * n);
    let mut src = vec![None; k0];
    for (i, &orig) in rem.kept.iter().enumerate() {
        src[orig] = Some(i);
    }
    for (r, s) in src.iter().enumerate() {
        match s {
            Some(i) => data.extend_from_slice(m.row(*i)),
            None => data.extend(std::iter::repeat_n(rem.fill[r], n)),
        }
    }
    Tensor::from_parts(vec![k0, n], data)
}

/// Future frames predicted from each history, recursing as needed to reach
/// `horizon` frames.
pub fn forecast_windows(model: &Forecaster, histories: &[&Tensor], horizon: usize) -> Result<Vec<Tensor>> {
    let t = model.config().t;
    let steps = horizon.div_ceil(t);
    histories
        .par_iter()
        .map(|h| model.recursive_predict(h, steps)?.future.slice_cols(0, horizon))
        .collect()
}

fn max_frame(horizons_ms: &[f64], fps: f64) -> Result<usize> {
    Ok(horizon_frames(horizons_ms, fps)?.into_iter().max().unwrap_or(1))
}

/// Model error over windows.
pub fn evaluate(model: &Forecaster, windows: &[EvalWindow], horizons_ms: &[f64], fps: f64, metric: &Metric) -> Result<ErrorTable> {
    let horizon = max_frame(horizons_ms, fps)?;
    let hist: Vec<&Tensor> = windows.iter().map(|w| &w.history).collect();
    let preds = forecast_windows(model, &hist, horizon)?;
    let gts: Vec<Tensor> = windows.iter().map(|w| w.future.slice_cols(0, horizon)).collect::<Result<_>>()?;
    metric.table(&preds, &gts, horizons_ms, fps)
}

/// Zero-velocity error over windows.
pub fn evaluate_zero_velocity(windows: &[EvalWindow], horizons_ms: &[f64], fps: f64, metric: &Metric) -> Result<ErrorTable> {
    let horizon = max_frame(horizons_ms, fps)?;
    let preds: Vec<Tensor> = windows.iter().map(|w| zero_velocity(&w.history, horizon)).collect::<Result<_>>()?;
    let gts: Vec<Tensor> = windows.iter().map(|w| w.future.slice_cols(0, horizon)).collect::<Result<_>>()?;
    metric.table(&preds, &gts, horizons_ms, fps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongHistoryReport {
    pub short: ErrorTable,
    pub long: ErrorTable,
    /// Short minus long, per horizon (positive when the long history helps).
    pub delta: Vec<f64>,
    /// Sequences too short for the long history.
    pub skipped: usize,
}

/// Evaluates one model with histories of `n` and `n_long` frames ending at
/// the same frame, so both see identical targets.
pub fn long_history_compare(
    model: &Forecaster,
    seqs: &[PoseSequence],
    n: usize,
    n_long: usize,
    horizons_ms: &[f64],
    fps: f64,
    metric: &Metric,
) -> Result<LongHistoryReport> {
    if n_long < n {
        return Err(Error::InvalidArgument(format!("long history {n_long} shorter than {n}")));
    }
    let horizon = max_frame(horizons_ms, fps)?;
    let skipped = seqs.iter().filter(|s| s.frames() < n_long + horizon).count();
    let long_windows = eval_windows(seqs, n_long, horizon, EVAL_STRIDE)?;
    if long_windows.is_empty() {
        return Err(Error::HistoryTooShort {
            needed: n_long + horizon,
            got: seqs.iter().map(PoseSequence::frames).max().unwrap_or(0),
        });
    }
    let short_windows = long_windows
        .iter()
        .map(|w| {
            Ok(EvalWindow {
                history: w.history.slice_cols(n_long - n, n_long)?,
                ..w.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let short = evaluate(model, &short_windows, horizons_ms, fps, metric)?;
    let long = evaluate(model, &long_windows, horizons_ms, fps, metric)?;
    let delta = short.first().iter().zip(long.first()).map(|(s, l)| s - l).collect();
    Ok(LongHistoryReport {
        short,
        long,
        delta,
        skipped,
    })
}

/// Error with Gaussian noise of each `sigma` added to the histories; targets
/// stay clean. Window `i` under seed `s` always receives the same noise draw.
pub fn noise_sweep(
    model: &Forecaster,
    windows: &[EvalWindow],
    sigmas: &[f64],
    seed: u64,
    horizons_ms: &[f64],
    fps: f64,
    metric: &Metric,
) -> Result<Vec<(f64, ErrorTable)>> {
    if sigmas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("sigmas must be sorted ascending".into()));
    }
    sigmas
        .iter()
        .map(|&sigma| {
            let noisy_windows: Vec<EvalWindow> = windows
                .iter()
                .enumerate()
                .map(|(i, w)| EvalWindow {
                    history: noisy(&w.history, sigma, seed.wrapping_mul(1_000_003).wrapping_add(i as u64)),
                    ..w.clone()
                })
                .collect();
            Ok((sigma, evaluate(model, &noisy_windows, horizons_ms, fps, metric)?))
        })
        .collect()
}

/// `sigma,<horizon>…` rows.
pub fn noise_csv(curve: &[(f64, ErrorTable)]) -> String {
    let mut s = String::from("sigma");
    if let Some((_, t)) = curve.first() {
        for h in &t.horizons_ms {
            let _ = write!(s, ",{}", fmt_horizon(*h));
        }
    }
    s.push('\n');
    for (sigma, t) in curve {
        s.push_str(&fmt_sig(*sigma));
        for v in t.first() {
            let _ = write!(s, ",{}", fmt_sig(v));
        }
        s.push('\n');
    }
    s
}

/// Ragged score rows, one per prediction step, padded with empty cells.
pub fn attention_csv(rows: &[Vec<f64>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::from("step");
    for i in 0..width {
        let _ = write!(s, ",k{i}");
    }
    s.push('\n');
    for (step, row) in rows.iter().enumerate() {
        s.push_str(&step.to_string());
        for i in 0..width {
            s.push(',');
            if let Some(v) = row.get(i) {
                s.push_str(&fmt_sig(*v));
            }
        }
        s.push('\n');
    }
    s
}

/// Attention maps and a trajectory dump ready to be written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionExport {
    /// `(file name, csv)` per level and part.
    pub maps: Vec<(String, String)>,
    pub trajectory: String,
    pub traces: Vec<AttentionTrace>,
}

/// Runs `steps` recursive predictions on the first `n` frames of `seq` and
/// collects attention rows plus observed, predicted and ground-truth values
/// of `coords`.
pub fn export_attention(model: &Forecaster, seq: &PoseSequence, n: usize, steps: usize, coords: &[usize]) -> Result<AttentionExport> {
    if seq.frames() < n {
        return Err(Error::HistoryTooShort { needed: n, got: seq.frames() });
    }
    let traj = seq.trajectories();
    let history = traj.slice_cols(0, n)?;
    let out = model.recursive_predict(&history, steps)?;
    let mut maps = Vec::new();
    for trace in &out.attention {
        for (p, rows) in trace.parts.iter().enumerate() {
            maps.push((format!("attention_{}_part{p}.csv", trace.level.as_str()), attention_csv(rows)));
        }
    }
    let k = traj.rows();
    if let Some(&c) = coords.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("coordinate {c} out of range for {k}")));
    }
    let mut s = String::from("frame");
    for c in coords {
        let _ = write!(s, ",c{c}_observed,c{c}_predicted,c{c}_gt");
    }
    s.push('\n');
    let total = n + out.future.cols();
    for f in 0..total {
        s.push_str(&f.to_string());
        for &c in coords {
            let obs = if f < n { fmt_sig(traj.get(c, f)) } else { String::new() };
            let pred = if f >= n { fmt_sig(out.future.get(c, f - n)) } else { String::new() };
            let gt = if f < traj.cols() { fmt_sig(traj.get(c, f)) } else { String::new() };
            let _ = write!(s, ",{obs},{pred},{gt}");
        }
        s.push('\n');
    }
    Ok(AttentionExport {
        maps,
        trajectory: s,
        traces: out.attention,
    })
}
