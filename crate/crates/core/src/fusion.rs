//! Combining attention levels: concatenation, pre-fusion of priors, and
//! post-fusion of whole predictions.
//!
//! Fusion weights are one softmax triple per coordinate row, produced by a
//! GCN stack whose output layer starts at zero (uniform weights).

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcn::{GcnStack, StackShape};
use crate::kv::KeyValues;
use crate::model::{append_traces, AttentionTrace, ModelConfig, MotionModel, Prediction, RecursiveOutput};
use crate::numerics::{load_checkpoint, save_checkpoint, seeded_rng, Bound, ParamStore, Tape, Tensor, Var};

/// Weight network over `inputs` stacked `K × n_keep` operands.
#[derive(Clone, Debug)]
pub struct FusionNet {
    stack: GcnStack,
    inputs: usize,
}

impl FusionNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        n_keep: usize,
        inputs: usize,
        f: usize,
        blocks: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let shape = StackShape {
            k,
            f_in: inputs * n_keep,
            hidden: f,
            f_out: inputs,
            blocks,
        };
        Ok(Self {
            stack: GcnStack::new(store, prefix, shape, false, true, rng)?,
            inputs,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// `K × inputs` weights, each row non-negative and summing to one.
    pub fn weights(&self, tape: &mut Tape, bound: &Bound, items: &[Var]) -> Result<Var> {
        if items.len() != self.inputs {
            return Err(Error::InvalidArgument(format!(
                "fusion expects {} inputs, got {}",
                self.inputs,
                items.len()
            )));
        }
        let x = tape.concat_cols(items)?;
        let logits = self.stack.forward(tape, bound, x)?;
        tape.softmax_rows(logits)
    }

    pub fn weights_for(&self, store: &ParamStore, items: &[&Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let vars: Vec<Var> = items.iter().map(|t| tape.constant((*t).clone())).collect();
        let w = self.weights(&mut tape, &bound, &vars)?;
        Ok(tape.value(w).clone())
    }
}

/// `Σ_j w[:, j] ⊙ items[j]` row-wise, on a tape.
pub fn combine_rows(tape: &mut Tape, weights: Var, items: &[Var]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (j, &item) in items.iter().enumerate() {
        let w = tape.slice_cols(weights, j, j + 1)?;
        let term = tape.row_scale(item, w)?;
        acc = Some(match acc {
            None => term,
            Some(a) => tape.add(a, term)?,
        });
    }
    acc.ok_or_else(|| Error::InvalidArgument("nothing to combine".into()))
}

/// Row-wise convex combination of equally shaped matrices.
pub fn convex_combine(items: &[&Tensor], weights: &Tensor) -> Result<Tensor> {
    let (k, n) = weights.expect_matrix("convex_combine")?;
    if n != items.len() || n == 0 {
        return Err(Error::InvalidArgument(format!("{n} weight columns for {} items", items.len())));
    }
    let shape = items[0].shape().to_vec();
    let mut out = Tensor::zeros(&shape);
    for (j, item) in items.iter().enumerate() {
        if item.shape() != shape.as_slice() || item.rows() != k {
            return Err(Error::Shape {
                op: "convex_combine",
                lhs: shape,
                rhs: item.shape().to_vec(),
            });
        }
        let cols = item.cols();
        for r in 0..k {
            let w = weights.get(r, j);
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            for (o, v) in row.iter_mut().zip(item.row(r)) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

/// `[D | U_1 | … ]`, the widened predictor input.
pub fn fuse_concat(d: &Tensor, priors: &[&Tensor]) -> Result<Tensor> {
    for p in priors {
        if p.shape() != d.shape() {
            return Err(Error::Shape {
                op: "fuse_concat",
                lhs: d.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let mut all = vec![d];
    all.extend_from_slice(priors);
    Tensor::concat_cols(&all)
}

/// Fused prior with weights from `net`.
pub fn fuse_pre(priors: &[&Tensor], net: &FusionNet, store: &ParamStore) -> Result<Tensor> {
    convex_combine(priors, &net.weights_for(store, priors)?)
}

/// Final poses from several predictions: the weights come from the stacked
/// coefficients and are applied to the decoded poses.
pub fn fuse_post(coeffs: &[&Tensor], poses: &[&Tensor], net: &FusionNet, store: &ParamStore) -> Result<(Tensor, Tensor)> {
    let w = net.weights_for(store, coeffs)?;
    Ok((convex_combine(poses, &w)?, w))
}

/// Several trained base models combined by a learned weight network. The
/// bases are frozen; only the fusion parameters train.
#[derive(Clone, Debug)]
pub struct PostFusionModel {
    bases: Vec<MotionModel>,
    store: ParamStore,
    net: FusionNet,
    f: usize,
    blocks: usize,
    seed: u64,
}

impl PostFusionModel {
    pub fn new(bases: Vec<MotionModel>, f: usize, blocks: usize, seed: u64) -> Result<Self> {
        if bases.len() < 2 {
            return Err(Error::InvalidArgument("post-fusion needs at least two base models".into()));
        }
        let c0 = bases[0].config();
        for b in &bases[1..] {
            let c = b.config();
            if (c.repr, c.joints, c.dims, c.m, c.t, c.n_keep) != (c0.repr, c0.joints, c0.dims, c0.m, c0.t, c0.n_keep) {
                return Err(Error::ConfigMismatch(format!(
                    "base models disagree: repr/K/M/T/n_keep {}/{}/{}/{}/{} vs {}/{}/{}/{}/{}",
                    c0.repr.as_str(),
                    c0.k(),
                    c0.m,
                    c0.t,
                    c0.n_keep,
                    c.repr.as_str(),
                    c.k(),
                    c.m,
                    c.t,
                    c.n_keep
                )));
            }
        }
        let mut rng = seeded_rng(seed);
        let mut store = ParamStore::new();
        let net = FusionNet::new(&mut store, "fusion", c0.k(), c0.n_keep, bases.len(), f, blocks, &mut rng)?;
        Ok(Self {
            bases,
            store,
            net,
            f,
            blocks,
            seed,
        })
    }

    pub fn bases(&self) -> &[MotionModel] {
        &self.bases
    }

    pub fn net(&self) -> &FusionNet {
        &self.net
    }

    /// Fusion parameters only.
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Predictions of every base model, computed in parallel.
    pub fn base_predictions(&self, history: &Tensor) -> Result<Vec<Prediction>> {
        self.bases.par_iter().map(|b| b.predict(history)).collect()
    }

    /// Fused poses and weights on a tape from precomputed base predictions.
    pub fn fuse(&self, tape: &mut Tape, bound: &Bound, preds: &[Prediction]) -> Result<(Var, Var)> {
        let coeffs: Vec<Var> = preds.iter().map(|p| tape.constant(p.coeffs.clone())).collect();
        let poses: Vec<Var> = preds.iter().map(|p| tape.constant(p.poses.clone())).collect();
        let w = self.net.weights(tape, bound, &coeffs)?;
        Ok((combine_rows(tape, w, &poses)?, w))
    }

    pub fn combine(&self, preds: Vec<Prediction>) -> Result<Prediction> {
        let coeffs: Vec<&Tensor> = preds.iter().map(|p| &p.coeffs).collect();
        let poses: Vec<&Tensor> = preds.iter().map(|p| &p.poses).collect();
        let (fused, w) = fuse_post(&coeffs, &poses, &self.net, &self.store)?;
        let fused_coeffs = convex_combine(&coeffs, &w)?;
        let attention = preds.into_iter().flat_map(|p| p.attention).collect();
        Ok(Prediction {
            coeffs: fused_coeffs,
            poses: fused,
            attention,
            weights: Some(w),
        })
    }

    pub fn predict(&self, history: &Tensor) -> Result<Prediction> {
        self.combine(self.base_predictions(history)?)
    }

    pub fn recursive_predict(&self, history: &Tensor, steps: usize) -> Result<RecursiveOutput> {
        if steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        let t = self.bases[0].config().t;
        let mut banks = self
            .bases
            .iter()
            .map(|b| b.banks(history))
            .collect::<Result<Vec<_>>>()?;
        let mut futures = Vec::with_capacity(steps);
        let mut attention: Vec<AttentionTrace> = Vec::new();
        for s in 0..steps {
            let preds = self
                .bases
                .par_iter()
                .zip(&banks)
                .map(|(b, bk)| b.predict_banks(bk))
                .collect::<Result<Vec<_>>>()?;
            let p = self.combine(preds)?;
            let fut = p.future(t);
            append_traces(&mut attention, p.attention);
            if s + 1 < steps {
                banks = self
                    .bases
                    .iter()
                    .zip(&banks)
                    .map(|(b, bk)| b.extend_banks(bk, &fut))
                    .collect::<Result<Vec<_>>>()?;
            }
            futures.push(fut);
        }
        let refs: Vec<&Tensor> = futures.iter().collect();
        Ok(RecursiveOutput {
            future: Tensor::concat_cols(&refs)?,
            attention,
        })
    }

    fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("kind", "post");
        kv.push("bases", self.bases.len());
        kv.push("F", self.f);
        kv.push("B", self.blocks);
        kv.push("seed", self.seed);
        for (i, b) in self.bases.iter().enumerate() {
            kv.extend_scoped(&format!("base{i}"), &b.config().to_kv());
        }
        kv
    }

    /// One archive holding every base and the fusion parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut all = ParamStore::new();
        for (i, b) in self.bases.iter().enumerate() {
            for (name, t) in b.store().iter() {
                all.insert(format!("base{i}.{name}"), t.clone())?;
            }
        }
        for (name, t) in self.store.iter() {
            all.insert(name, t.clone())?;
        }
        save_checkpoint(path, &all, self.to_kv().pairs())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, cfg) = load_checkpoint(path)?;
        Self::from_parts(&KeyValues::from_pairs(cfg), &store)
    }

    pub(crate) fn from_parts(kv: &KeyValues, all: &ParamStore) -> Result<Self> {
        if kv.get("kind") != Some("post") {
            return Err(Error::Checkpoint("not a post-fusion manifest".into()));
        }
        let n: usize = kv.parse_key("bases")?;
        let mut bases = Vec::with_capacity(n);
        for i in 0..n {
            let prefix = format!("base{i}.");
            let mut part = ParamStore::new();
            for (name, t) in all.iter() {
                if let Some(rest) = name.strip_prefix(&prefix) {
                    part.insert(rest, t.clone())?;
                }
            }
            let cfg = ModelConfig::from_kv(&kv.scoped(&format!("base{i}")))?;
            bases.push(MotionModel::from_parts(cfg, &part)?);
        }
        let mut model = Self::new(bases, kv.parse_key("F")?, kv.parse_key("B")?, kv.parse_key("seed")?)?;
        for (name, dst) in model.store.names().to_vec().iter().zip(0..) {
            let src = all
                .by_name(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing fusion parameter {name}")))?;
            let slot = &mut model.store.tensors_mut()[dst];
            if slot.shape() != src.shape() {
                return Err(Error::Checkpoint(format!("fusion parameter {name} has the wrong shape")));
            }
            *slot = src.clone();
        }
        Ok(model)
    }
}
