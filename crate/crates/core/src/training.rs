//! Losses, learning-rate schedule, window slicing and the training loops.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::PostFusionModel;
use crate::kv::KeyValues;
use crate::model::{MotionModel, Prediction};
use crate::numerics::{seeded_rng, AdamState, ParamStore, Tape, Tensor, Var};
use crate::pose::{PoseSequence, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Mean Euclidean joint distance, for `xyz` data.
    Mpjpe,
    /// Mean absolute angle difference, for `expmap` data.
    AngleL1,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mpjpe => "mpjpe",
            LossKind::AngleL1 => "angle-l1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mpjpe" => Ok(LossKind::Mpjpe),
            "angle-l1" => Ok(LossKind::AngleL1),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }

    /// The representation this loss is defined on.
    pub fn representation(self) -> Representation {
        match self {
            LossKind::Mpjpe => Representation::Xyz,
            LossKind::AngleL1 => Representation::Expmap,
        }
    }

    pub fn check(self, repr: Representation) -> Result<()> {
        if repr == self.representation() {
            Ok(())
        } else {
            Err(Error::Representation {
                expected: self.representation().as_str(),
                got: repr.as_str(),
            })
        }
    }

    pub fn for_representation(repr: Representation) -> Self {
        match repr {
            Representation::Xyz => LossKind::Mpjpe,
            Representation::Expmap => LossKind::AngleL1,
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean joint distance between `frames × 3J` matrices.
pub fn loss_mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    same_shape("loss_mpjpe", pred, gt)?;
    let (frames, k) = pred.expect_matrix("loss_mpjpe")?;
    if k % 3 != 0 || k == 0 || frames == 0 {
        return Err(Error::InvalidArgument(format!("{frames} x {k} is not a 3D joint layout")));
    }
    let mut total = 0.0;
    for (p, g) in pred.data().chunks(3).zip(gt.data().chunks(3)) {
        total += p.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }
    Ok(total / (frames * k / 3) as f64)
}

/// Mean absolute difference between `frames × K` angle matrices.
pub fn loss_angle_l1(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    same_shape("loss_angle_l1", pred, gt)?;
    if pred.numel() == 0 {
        return Err(Error::InvalidArgument("empty angle matrices".into()));
    }
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.numel() as f64)
}

/// Loss of `K × L` predictions against `K × L` targets on a tape.
pub fn loss_var(tape: &mut Tape, kind: LossKind, squared: bool, pred: Var, gt: &Tensor) -> Result<Var> {
    let gt = tape.constant(gt.clone());
    let diff = tape.sub(pred, gt)?;
    match kind {
        LossKind::AngleL1 => {
            let a = tape.abs(diff);
            Ok(tape.mean(a))
        }
        LossKind::Mpjpe if squared => {
            let sq = tape.mul(diff, diff)?;
            let m = tape.mean(sq);
            Ok(tape.scale(m, 3.0))
        }
        LossKind::Mpjpe => {
            let (k, l) = (tape.shape(diff)[0], tape.shape(diff)[1]);
            if k % 3 != 0 {
                return Err(Error::InvalidArgument(format!("{k} coordinates are not a 3D joint layout")));
            }
            let t = tape.transpose(diff)?;
            let joints = tape.reshape(t, &[l * k / 3, 3])?;
            let norms = tape.row_norm(joints)?;
            Ok(tape.mean(norms))
        }
    }
}

/// Plain-tensor loss of `K × L` matrices.
pub fn loss_value(kind: LossKind, pred: &Tensor, gt: &Tensor) -> Result<f64> {
    match kind {
        LossKind::Mpjpe => loss_mpjpe(&pred.transpose()?, &gt.transpose()?),
        LossKind::AngleL1 => loss_angle_l1(pred, gt),
    }
}

/// `lr0 · 10^(−epoch / decay_epochs)`: a tenfold drop every `decay_epochs`.
pub fn lr_at(epoch: usize, lr0: f64, decay_epochs: f64) -> f64 {
    lr0 * 10f64.powf(-(epoch as f64) / decay_epochs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Epochs per tenfold learning-rate drop.
    pub lr_decay_epochs: f64,
    pub loss: LossKind,
    pub squared_loss: bool,
    /// History length `N`.
    pub n: usize,
    /// Stride between training window starts.
    pub stride: usize,
    pub fusion_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: batch 16, `lr = 5e-4`, `N = 50`.
    pub fn new(loss: LossKind) -> Self {
        Self {
            epochs: 50,
            batch: 16,
            lr: 5e-4,
            lr_decay_epochs: 50.0,
            loss,
            squared_loss: false,
            n: 50,
            stride: 1,
            fusion_epochs: 20,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("epochs, batch and stride must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.lr_decay_epochs > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad learning rate {} or decay {}",
                self.lr, self.lr_decay_epochs
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("epochs", self.epochs);
        kv.push("batch", self.batch);
        kv.push("lr", self.lr);
        kv.push("lr_decay_epochs", self.lr_decay_epochs);
        kv.push("loss", self.loss.as_str());
        kv.push("squared_loss", self.squared_loss);
        kv.push("N", self.n);
        kv.push("stride", self.stride);
        kv.push("fusion_epochs", self.fusion_epochs);
        kv.push("train_seed", self.seed);
        kv
    }
}

/// One training example cut from a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// `K × N` observed frames.
    pub history: Tensor,
    /// `K × (M + T)`: the last `M` observed frames and the `T` that follow.
    pub target: Tensor,
    pub source: usize,
    pub start: usize,
}

impl Window {
    pub fn future(&self, t: usize) -> Tensor {
        let l = self.target.cols();
        self.target.slice_cols(l - t, l).expect("target holds the future")
    }
}

/// Every window of `n + t` consecutive frames, starts `stride` apart.
pub fn slice_windows(seqs: &[PoseSequence], n: usize, m: usize, t: usize, stride: usize) -> Result<Vec<Window>> {
    if m > n || t == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!("bad window shape N={n} M={m} T={t} stride={stride}")));
    }
    let mut out = Vec::new();
    for (source, seq) in seqs.iter().enumerate() {
        if seq.frames() < n + t {
            continue;
        }
        let traj = seq.trajectories();
        for start in (0..=seq.frames() - n - t).step_by(stride) {
            out.push(Window {
                history: traj.slice_cols(start, start + n)?,
                target: traj.slice_cols(start + n - m, start + n + t)?,
                source,
                start,
            });
        }
    }
    Ok(out)
}

/// Splits sources into training and validation sets, holding out
/// `round(fraction · count)` sources (at least one when there are two or more).
pub fn split_sources<T: Clone>(items: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    if n < 2 || fraction <= 0.0 {
        return (items.to_vec(), Vec::new());
    }
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let mut val: Vec<usize> = idx[..n_val].to_vec();
    val.sort_unstable();
    let train = (0..n).filter(|i| !val.contains(i)).map(|i| items[i].clone()).collect();
    (train, val.into_iter().map(|i| items[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_score: f64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,lr` rows; an empty cell when there is no
    /// validation set.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.curve {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, val, r.lr);
        }
        s
    }
}

/// Mini-batch Adam shared by both training stages. `grad(store, i)` returns
/// the loss and parameter gradients of example `i`; `validate(store)` the
/// score used to pick the kept epoch (lower is better).
fn fit<G, V>(store: &mut ParamStore, examples: usize, epochs: usize, cfg: &TrainConfig, grad: G, validate: V) -> Result<TrainReport>
where
    G: Fn(&ParamStore, usize) -> Result<(f64, Vec<Tensor>)> + Sync,
    V: Fn(&ParamStore) -> Result<Option<f64>>,
{
    cfg.validate()?;
    if examples == 0 {
        return Err(Error::InvalidArgument("no training windows".into()));
    }
    let mut adam = AdamState::new(store, cfg.lr);
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..examples).collect();
    let mut curve = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 0..epochs {
        adam.lr = lr_at(epoch, cfg.lr, cfg.lr_decay_epochs);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| grad(store, i))
                .collect::<Result<Vec<_>>>()?;
            let mut sum: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                for (s, gi) in sum.iter_mut().zip(g) {
                    s.add_assign(gi)?;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {batch_loss} at epoch {epoch}, batch {b} (examples {batch:?})"
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            let mean: Vec<Tensor> = sum.iter().map(|s| s.scale(scale)).collect();
            adam.step(store, &mean)?;
            total += batch_loss;
        }
        let train_loss = total / examples as f64;
        let val_loss = validate(store)?;
        let score = val_loss.unwrap_or(train_loss);
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: adam.lr,
        });
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, store.clone()));
        }
    }
    let (best_score, best_epoch, kept) = best.expect("at least one epoch ran");
    *store = kept;
    Ok(TrainReport {
        curve,
        best_epoch,
        best_score,
    })
}

fn window_grad(model: &MotionModel, store: &ParamStore, w: &Window, cfg: &TrainConfig) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, true);
    let out = model.forward(&mut tape, &bound, &w.history)?;
    let loss = loss_var(&mut tape, cfg.loss, cfg.squared_loss, out.poses, &w.target)?;
    let grads = tape.backward(loss)?;
    let value = tape.value(loss).item();
    Ok((value, bound.vars().iter().map(|v| grads.wrt(*v)).collect()))
}

/// Mean over windows of the error over the `T` future frames.
pub fn future_error(kind: LossKind, preds: &[Tensor], windows: &[Window], t: usize) -> Result<f64> {
    let mut total = 0.0;
    for (p, w) in preds.iter().zip(windows) {
        let l = p.cols();
        total += loss_value(kind, &p.slice_cols(l - t, l)?, &w.future(t))?;
    }
    Ok(total / windows.len() as f64)
}

fn predict_with(model: &MotionModel, store: &ParamStore, history: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let out = model.forward(&mut tape, &bound, history)?;
    Ok(tape.value(out.poses).clone())
}

/// Trains attention and predictor parameters jointly, keeping the epoch with
/// the lowest validation error over the future frames (training loss when
/// `val` is empty).
pub fn train_base(model: &mut MotionModel, train: &[Window], val: &[Window], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.loss.check(model.config().repr)?;
    let t = model.config().t;
    let mut store = model.store().clone();
    let frozen = model.clone();
    let report = fit(
        &mut store,
        train.len(),
        cfg.epochs,
        cfg,
        |s, i| window_grad(&frozen, s, &train[i], cfg),
        |s| {
            if val.is_empty() {
                return Ok(None);
            }
            let preds = val
                .par_iter()
                .map(|w| predict_with(&frozen, s, &w.history))
                .collect::<Result<Vec<_>>>()?;
            future_error(cfg.loss, &preds, val, t).map(Some)
        },
    )?;
    *model.store_mut() = store;
    Ok(report)
}

fn fused_poses(model: &PostFusionModel, store: &ParamStore, preds: &[Prediction]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let (poses, _) = model.fuse(&mut tape, &bound, preds)?;
    Ok(tape.value(poses).clone())
}

/// Trains only the fusion parameters for `cfg.fusion_epochs`; base
/// predictions are computed once from the frozen bases.
pub fn train_fusion(model: &mut PostFusionModel, train: &[Window], val: &[Window], cfg: &TrainConfig) -> Result<TrainReport> {
    let base_cfg = model.bases()[0].config().clone();
    cfg.loss.check(base_cfg.repr)?;
    let cfg = TrainConfig {
        epochs: cfg.fusion_epochs,
        ..cfg.clone()
    };
    let precompute = |ws: &[Window]| -> Result<Vec<Vec<Prediction>>> {
        ws.par_iter().map(|w| model.base_predictions(&w.history)).collect()
    };
    let train_preds = precompute(train)?;
    let val_preds = precompute(val)?;
    let mut store = model.store().clone();
    let frozen = model.clone();
    let report = fit(
        &mut store,
        train.len(),
        cfg.epochs,
        &cfg,
        |s, i| {
            let mut tape = Tape::new();
            let bound = s.bind(&mut tape, true);
            let (poses, _) = frozen.fuse(&mut tape, &bound, &train_preds[i])?;
            let loss = loss_var(&mut tape, cfg.loss, cfg.squared_loss, poses, &train[i].target)?;
            let grads = tape.backward(loss)?;
            let value = tape.value(loss).item();
            Ok((value, bound.vars().iter().map(|v| grads.wrt(*v)).collect()))
        },
        |s| {
            if val.is_empty() {
                return Ok(None);
            }
            let preds = val_preds
                .par_iter()
                .map(|p| fused_poses(&frozen, s, p))
                .collect::<Result<Vec<_>>>()?;
            future_error(cfg.loss, &preds, val, base_cfg.t).map(Some)
        },
    )?;
    *model.store_mut() = store;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let p = Tensor::matrix(1, 3, vec![3.0, 4.0, 0.0]).unwrap();
        let g = Tensor::zeros(&[1, 3]);
        assert_eq!(loss_mpjpe(&p, &g).unwrap(), 5.0);
        assert_eq!(loss_mpjpe(&p, &p).unwrap(), 0.0);
        assert!(loss_mpjpe(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2])).is_err());
    }

    #[test]
    fn single_angle() {
        let p = Tensor::matrix(1, 1, vec![0.2]).unwrap();
        assert!((loss_angle_l1(&p, &Tensor::zeros(&[1, 1])).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn representation_checked() {
        assert!(LossKind::Mpjpe.check(Representation::Expmap).is_err());
        assert!(LossKind::AngleL1.check(Representation::Expmap).is_ok());
    }

    #[test]
    fn schedule() {
        assert_eq!(lr_at(0, 5e-4, 50.0), 5e-4);
        assert!((lr_at(50, 5e-4, 50.0) / 5e-5 - 1.0).abs() < 1e-12);
        assert!((lr_at(25, 5e-4, 50.0) - 5e-4 / 10f64.sqrt()).abs() < 1e-18);
        assert!(lr_at(60, 5e-4, 50.0) < 5e-5);
    }

    #[test]
    fn tape_loss_matches_plain() {
        let p = Tensor::from_parts(vec![6, 4], (0..24).map(|i| (i as f64).sin()).collect());
        let g = Tensor::from_parts(vec![6, 4], (0..24).map(|i| (i as f64 * 0.5).cos()).collect());
        for kind in [LossKind::Mpjpe, LossKind::AngleL1] {
            let mut tape = Tape::new();
            let v = tape.constant(p.clone());
            let l = loss_var(&mut tape, kind, false, v, &g).unwrap();
            assert!((tape.value(l).item() - loss_value(kind, &p, &g).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn source_split() {
        let (tr, va) = split_sources(&(0..10).collect::<Vec<_>>(), 0.1, 3);
        assert_eq!((tr.len(), va.len()), (9, 1));
        let (tr, va) = split_sources(&[7], 0.1, 3);
        assert_eq!((tr, va.len()), (vec![7], 0));
    }
}
