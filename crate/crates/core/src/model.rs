//! A full forecaster: one or more attention levels feeding one predictor.

use std::path::Path;

use crate::attention::{extend_bank, AttentionConfig, AttentionMode, AttentionModel, KeyValueBank};
use crate::error::{Error, Result};
use crate::fusion::{combine_rows, FusionNet, PostFusionModel};
use crate::gcn::{Predictor, PredictorConfig};
use crate::kv::KeyValues;
use crate::numerics::{load_checkpoint, save_checkpoint, seeded_rng, Bound, ParamStore, Tape, Tensor, Var};
use crate::pose::{Level, PartPartition, Representation};

/// How the priors of several attention levels reach the predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorMode {
    /// One attention level.
    Single,
    /// All priors concatenated after `D`.
    Concat,
    /// Priors mixed by a fusion network into one prior.
    Pre,
}

impl PriorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorMode::Single => "single",
            PriorMode::Concat => "concat",
            PriorMode::Pre => "pre",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(PriorMode::Single),
            "concat" => Ok(PriorMode::Concat),
            "pre" => Ok(PriorMode::Pre),
            other => Err(Error::InvalidArgument(format!("unknown prior mode {other:?}"))),
        }
    }
}

/// Kernel sizes whose receptive field is exactly `m` frames.
pub fn default_kernels(m: usize) -> (usize, usize) {
    let k1 = m / 2 + 1;
    (k1, (m + 1).saturating_sub(k1).max(1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub repr: Representation,
    pub joints: usize,
    pub dims: usize,
    pub m: usize,
    pub t: usize,
    pub d: usize,
    pub f: usize,
    pub blocks: usize,
    pub n_keep: usize,
    pub kernels: (usize, usize),
    pub mode: AttentionMode,
    pub prior: PriorMode,
    /// One partition per attention level, levels distinct.
    pub partitions: Vec<PartPartition>,
    pub share_joint_nets: bool,
    pub matched_init: bool,
    pub identity_adjacency: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Single-level model with desk-scale sizes (`d = 32`, `F = 64`, 4 blocks,
    /// `M = T = 10`).
    pub fn new(repr: Representation, joints: usize, dims: usize, partition: PartPartition) -> Self {
        Self {
            repr,
            joints,
            dims,
            m: 10,
            t: 10,
            d: 32,
            f: 64,
            blocks: 4,
            n_keep: 20,
            kernels: (6, 5),
            mode: AttentionMode::Motion,
            prior: PriorMode::Single,
            partitions: vec![partition],
            share_joint_nets: true,
            matched_init: true,
            identity_adjacency: false,
            seed: 0,
        }
    }

    /// Sets `M` and `T`, resetting kernels and `n_keep` to match.
    pub fn with_horizon(mut self, m: usize, t: usize) -> Self {
        self.m = m;
        self.t = t;
        self.kernels = default_kernels(m);
        self.n_keep = m + t;
        self
    }

    pub fn k(&self) -> usize {
        self.joints * self.dims
    }

    pub fn len(&self) -> usize {
        self.m + self.t
    }

    pub fn levels(&self) -> Vec<Level> {
        self.partitions.iter().map(PartPartition::level).collect()
    }

    pub fn attention_config(&self, level: Level) -> AttentionConfig {
        AttentionConfig {
            m: self.m,
            t: self.t,
            d: self.d,
            level,
            kernels: self.kernels,
            mode: self.mode,
            n_keep: self.n_keep,
            share_joint_nets: self.share_joint_nets,
            matched_init: self.matched_init,
        }
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig {
            k: self.k(),
            m: self.m,
            t: self.t,
            f: self.f,
            blocks: self.blocks,
            n_keep: self.n_keep,
            priors: if self.prior == PriorMode::Concat { self.partitions.len() } else { 1 },
            identity_adjacency: self.identity_adjacency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.partitions.len();
        let ok = match self.prior {
            PriorMode::Single => n == 1,
            PriorMode::Concat | PriorMode::Pre => n >= 2,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "prior mode {} cannot use {n} attention levels",
                self.prior.as_str()
            )));
        }
        let levels = self.levels();
        for (i, l) in levels.iter().enumerate() {
            if levels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("level {} given twice", l.as_str())));
            }
        }
        for p in &self.partitions {
            if p.k() != self.k() {
                return Err(Error::InvalidArgument(format!(
                    "partition covers {} coordinates, model has {}",
                    p.k(),
                    self.k()
                )));
            }
            self.attention_config(p.level()).validate()?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.push("kind", "base");
        kv.push("repr", self.repr.as_str());
        kv.push("joints", self.joints);
        kv.push("dims", self.dims);
        kv.push("K", self.k());
        kv.push("M", self.m);
        kv.push("T", self.t);
        kv.push("d", self.d);
        kv.push("F", self.f);
        kv.push("B", self.blocks);
        kv.push("n_keep", self.n_keep);
        kv.push("kernels", format!("{},{}", self.kernels.0, self.kernels.1));
        kv.push("mode", self.mode.as_str());
        kv.push("prior", self.prior.as_str());
        let levels: Vec<&str> = self.levels().iter().map(|l| l.as_str()).collect();
        kv.push("level", levels.join(","));
        for p in &self.partitions {
            let groups: Vec<String> = p
                .groups()
                .iter()
                .map(|g| g.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
                .collect();
            kv.push(&format!("groups.{}", p.level().as_str()), groups.join(";"));
        }
        kv.push("share_joint_nets", self.share_joint_nets);
        kv.push("matched_init", self.matched_init);
        kv.push("identity_adjacency", self.identity_adjacency);
        kv.push("seed", self.seed);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if kv.get("kind") != Some("base") {
            return Err(Error::Checkpoint("not a base model manifest".into()));
        }
        let joints: usize = kv.parse_key("joints")?;
        let dims: usize = kv.parse_key("dims")?;
        let k = joints * dims;
        let kernels = kv
            .require("kernels")?
            .split_once(',')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| Error::Checkpoint("bad kernels entry".into()))?;
        let mut partitions = Vec::new();
        for name in kv.require("level")?.split(',') {
            let level = Level::parse(name)?;
            let groups = kv
                .require(&format!("groups.{name}"))?
                .split(';')
                .map(|g| {
                    g.split(',')
                        .map(|i| i.parse::<usize>().map_err(|_| Error::Checkpoint(format!("bad group index {i:?}"))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            partitions.push(PartPartition::from_groups(level, groups, k)?);
        }
        let cfg = Self {
            repr: Representation::parse(kv.require("repr")?)?,
            joints,
            dims,
            m: kv.parse_key("M")?,
            t: kv.parse_key("T")?,
            d: kv.parse_key("d")?,
            f: kv.parse_key("F")?,
            blocks: kv.parse_key("B")?,
            n_keep: kv.parse_key("n_keep")?,
            kernels,
            mode: AttentionMode::parse(kv.require("mode")?)?,
            prior: PriorMode::parse(kv.require("prior")?)?,
            partitions,
            share_joint_nets: kv.parse_key("share_joint_nets")?,
            matched_init: kv.parse_key("matched_init")?,
            identity_adjacency: kv.parse_key("identity_adjacency")?,
            seed: kv.parse_key("seed")?,
        };
        if kv.parse_key::<usize>("K")? != k {
            return Err(Error::Checkpoint("K does not equal joints x dims".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `K × n_keep` predicted coefficients.
    pub coeffs: Var,
    /// `K × (M + T)` poses.
    pub poses: Var,
    /// Attention scores per level, per part.
    pub scores: Vec<Vec<Var>>,
    /// `K × levels` pre-fusion weights, when used.
    pub weights: Option<Var>,
}

/// Attention rows of one level: `parts[p][step]` is a score vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    pub level: Level,
    pub parts: Vec<Vec<Vec<f64>>>,
}

/// A prediction on plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub coeffs: Tensor,
    /// `K × (M + T)`: reconstructed observed window then the future.
    pub poses: Tensor,
    /// One trace per attention level, each with a single step.
    pub attention: Vec<AttentionTrace>,
    /// Per-coordinate fusion weights, when the model fuses.
    pub weights: Option<Tensor>,
}

impl Prediction {
    /// The last `t` columns of the poses.
    pub fn future(&self, t: usize) -> Tensor {
        let len = self.poses.cols();
        self.poses
            .slice_cols(len - t, len)
            .expect("prediction is at least T frames long")
    }
}

/// Output of [`MotionModel::recursive_predict`].
#[derive(Clone, Debug, PartialEq)]
pub struct RecursiveOutput {
    /// `K × (steps · T)`.
    pub future: Tensor,
    pub attention: Vec<AttentionTrace>,
}

pub(crate) fn append_traces(into: &mut Vec<AttentionTrace>, step: Vec<AttentionTrace>) {
    if into.is_empty() {
        *into = step;
        return;
    }
    for (acc, s) in into.iter_mut().zip(step) {
        for (rows, row) in acc.parts.iter_mut().zip(s.parts) {
            rows.extend(row);
        }
    }
}

#[derive(Clone, Debug)]
pub struct MotionModel {
    cfg: ModelConfig,
    store: ParamStore,
    attention: Vec<AttentionModel>,
    fusion: Option<FusionNet>,
    predictor: Predictor,
}

impl MotionModel {
    /// Builds a freshly initialised model from `cfg.seed`.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded_rng(cfg.seed);
        let mut store = ParamStore::new();
        let attention = cfg
            .partitions
            .iter()
            .map(|p| {
                let prefix = format!("att.{}", p.level().as_str());
                AttentionModel::new(cfg.attention_config(p.level()), p.clone(), &mut store, &prefix, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = if cfg.prior == PriorMode::Pre {
            Some(FusionNet::new(
                &mut store,
                "prefuse",
                cfg.k(),
                cfg.n_keep,
                cfg.partitions.len(),
                cfg.f,
                cfg.blocks,
                &mut rng,
            )?)
        } else {
            None
        };
        let predictor = Predictor::new(cfg.predictor_config(), &mut store, "pred", &mut rng)?;
        Ok(Self {
            cfg,
            store,
            attention,
            fusion,
            predictor,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn attention(&self) -> &[AttentionModel] {
        &self.attention
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// Minimum history length.
    pub fn min_history(&self) -> usize {
        self.cfg.len()
    }

    /// Builds one bank per level with encoded keys cached.
    pub fn banks(&self, history: &Tensor) -> Result<Vec<KeyValueBank>> {
        self.attention
            .iter()
            .map(|a| {
                let mut bank = a.build_bank(history)?;
                a.encode_bank_keys(&self.store, &mut bank)?;
                Ok(bank)
            })
            .collect()
    }

    /// Appends predicted frames to every bank.
    pub fn extend_banks(&self, banks: &[KeyValueBank], future: &Tensor) -> Result<Vec<KeyValueBank>> {
        banks
            .iter()
            .zip(&self.attention)
            .map(|(b, a)| {
                let mut bank = extend_bank(b, future)?;
                a.encode_bank_keys(&self.store, &mut bank)?;
                Ok(bank)
            })
            .collect()
    }

    pub fn forward_banks(&self, tape: &mut Tape, bound: &Bound, banks: &[KeyValueBank]) -> Result<ForwardOutput> {
        if banks.len() != self.attention.len() {
            return Err(Error::InvalidArgument(format!(
                "{} banks for {} attention levels",
                banks.len(),
                self.attention.len()
            )));
        }
        let window = banks[0].last_window()?;
        let mut priors = Vec::with_capacity(banks.len());
        let mut scores = Vec::with_capacity(banks.len());
        for (a, bank) in self.attention.iter().zip(banks) {
            let out = a.prior(tape, bound, bank)?;
            priors.push(out.u);
            scores.push(out.scores);
        }
        let mut weights = None;
        if let Some(net) = &self.fusion {
            let w = net.weights(tape, bound, &priors)?;
            priors = vec![combine_rows(tape, w, &priors)?];
            weights = Some(w);
        }
        let pred = self.predictor.forward(tape, bound, &window, &priors)?;
        Ok(ForwardOutput {
            coeffs: pred.coeffs,
            poses: pred.poses,
            scores,
            weights,
        })
    }

    /// Forward pass on a `K × N` history.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, history: &Tensor) -> Result<ForwardOutput> {
        let banks = self
            .attention
            .iter()
            .map(|a| a.build_bank(history))
            .collect::<Result<Vec<_>>>()?;
        self.forward_banks(tape, bound, &banks)
    }

    pub fn predict_banks(&self, banks: &[KeyValueBank]) -> Result<Prediction> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape, false);
        let out = self.forward_banks(&mut tape, &bound, banks)?;
        let attention = self
            .attention
            .iter()
            .zip(&out.scores)
            .map(|(a, s)| AttentionTrace {
                level: a.config().level,
                parts: s.iter().map(|v| vec![tape.value(*v).data().to_vec()]).collect(),
            })
            .collect();
        Ok(Prediction {
            coeffs: tape.value(out.coeffs).clone(),
            poses: tape.value(out.poses).clone(),
            attention,
            weights: out.weights.map(|w| tape.value(w).clone()),
        })
    }

    /// Prediction for a `K × N` history.
    pub fn predict(&self, history: &Tensor) -> Result<Prediction> {
        self.predict_banks(&self.banks(history)?)
    }

    /// Predicts `steps · T` frames by feeding each prediction back as history.
    pub fn recursive_predict(&self, history: &Tensor, steps: usize) -> Result<RecursiveOutput> {
        if steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        let t = self.cfg.t;
        let mut banks = self.banks(history)?;
        let mut futures = Vec::with_capacity(steps);
        let mut attention = Vec::new();
        for s in 0..steps {
            let p = self.predict_banks(&banks)?;
            let fut = p.future(t);
            append_traces(&mut attention, p.attention);
            if s + 1 < steps {
                banks = self.extend_banks(&banks, &fut)?;
            }
            futures.push(fut);
        }
        let refs: Vec<&Tensor> = futures.iter().collect();
        Ok(RecursiveOutput {
            future: Tensor::concat_cols(&refs)?,
            attention,
        })
    }

    /// Copies parameters from `store` by name, checking shapes.
    pub(crate) fn load_params(&mut self, store: &ParamStore) -> Result<()> {
        if store.names() != self.store.names() {
            return Err(Error::Checkpoint("parameter names do not match the model layout".into()));
        }
        for (dst, src) in self.store.tensors_mut().iter_mut().zip(store.tensors()) {
            if dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter shape {:?} does not match {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn from_parts(cfg: ModelConfig, store: &ParamStore) -> Result<Self> {
        let mut model = Self::new(cfg)?;
        model.load_params(store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.store, self.cfg.to_kv().pairs())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, cfg) = load_checkpoint(path)?;
        Self::from_parts(ModelConfig::from_kv(&KeyValues::from_pairs(cfg))?, &store)
    }
}

/// Any trained forecaster loaded from a checkpoint.
#[derive(Clone, Debug)]
pub enum Forecaster {
    Base(MotionModel),
    Post(PostFusionModel),
}

impl Forecaster {
    pub fn load(path: &Path) -> Result<Self> {
        let (store, cfg) = load_checkpoint(path)?;
        let kv = KeyValues::from_pairs(cfg);
        match kv.get("kind") {
            Some("base") => Ok(Forecaster::Base(MotionModel::from_parts(ModelConfig::from_kv(&kv)?, &store)?)),
            Some("post") => Ok(Forecaster::Post(PostFusionModel::from_parts(&kv, &store)?)),
            other => Err(Error::Checkpoint(format!("unknown checkpoint kind {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Forecaster::Base(m) => m.save(path),
            Forecaster::Post(m) => m.save(path),
        }
    }

    /// Configuration of the (first) base model.
    pub fn config(&self) -> &ModelConfig {
        match self {
            Forecaster::Base(m) => m.config(),
            Forecaster::Post(m) => m.bases()[0].config(),
        }
    }

    pub fn predict(&self, history: &Tensor) -> Result<Prediction> {
        match self {
            Forecaster::Base(m) => m.predict(history),
            Forecaster::Post(m) => m.predict(history),
        }
    }

    pub fn recursive_predict(&self, history: &Tensor, steps: usize) -> Result<RecursiveOutput> {
        match self {
            Forecaster::Base(m) => m.recursive_predict(history, steps),
            Forecaster::Post(m) => m.recursive_predict(history, steps),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{make_partition, PartMap};

    fn tiny(level: Level, prior: PriorMode) -> ModelConfig {
        let map = PartMap::contiguous(2);
        let part = make_partition(6, 3, level, Some(&map)).unwrap();
        let mut cfg = ModelConfig::new(Representation::Xyz, 2, 3, part).with_horizon(4, 2);
        cfg.d = 4;
        cfg.f = 6;
        cfg.blocks = 1;
        cfg.prior = prior;
        cfg
    }

    #[test]
    fn kernels_cover_window() {
        for m in 2..20 {
            let (a, b) = default_kernels(m);
            assert_eq!(a + b - 1, m);
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let mut cfg = tiny(Level::Pose, PriorMode::Concat);
        cfg.partitions.push(make_partition(6, 3, Level::Joint, None).unwrap());
        let kv = cfg.to_kv();
        assert_eq!(ModelConfig::from_kv(&kv).unwrap(), cfg);
        assert_eq!(kv.get("level"), Some("pose,joint"));
    }

    #[test]
    fn prior_mode_level_count_checked() {
        assert!(MotionModel::new(tiny(Level::Pose, PriorMode::Concat)).is_err());
        let mut cfg = tiny(Level::Pose, PriorMode::Single);
        cfg.partitions.push(make_partition(6, 3, Level::Pose, None).unwrap());
        cfg.prior = PriorMode::Concat;
        assert!(MotionModel::new(cfg).is_err());
    }

    #[test]
    fn save_load_predicts_identically() {
        let m = MotionModel::new(tiny(Level::Joint, PriorMode::Single)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p).unwrap();
        let l = MotionModel::load(&p).unwrap();
        let h = Tensor::from_parts(vec![6, 9], (0..54).map(|i| (i as f64 * 0.37).sin()).collect());
        assert_eq!(m.predict(&h).unwrap(), l.predict(&h).unwrap());
    }

    #[test]
    fn recursion_shapes() {
        let m = MotionModel::new(tiny(Level::Part, PriorMode::Single)).unwrap();
        let h = Tensor::from_parts(vec![6, 10], (0..60).map(|i| (i as f64 * 0.21).cos()).collect());
        let out = m.recursive_predict(&h, 3).unwrap();
        assert_eq!(out.future.shape(), &[6, 6]);
        let lens: Vec<usize> = out.attention[0].parts[0].iter().map(Vec::len).collect();
        assert_eq!(lens, vec![5, 7, 9]);
    }
}
