//! Motion attention over history sub-sequences.
//!
//! The history of each body part is cut into every window of `M + T`
//! consecutive frames. The first `M` frames of a window form its key, the DCT
//! of the whole window is its value, and the last `M` observed frames form the
//! query. Query and keys are embedded by two-layer valid convolutions with
//! ReLU, scored by dot products normalised by their sum, and the values are
//! averaged with those scores to give the motion prior `U`.

use rand_chacha::ChaCha8Rng;

use crate::dct::dct;
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::pose::{Level, PartPartition};

/// Score sums below this fall back to uniform attention.
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionMode {
    /// Keys and query are length-`M` sub-sequences.
    Motion,
    /// Keys and query are single frames (the last frame of each key window).
    FrameWise,
}

impl AttentionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttentionMode::Motion => "motion",
            AttentionMode::FrameWise => "frame-wise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "motion" => Ok(AttentionMode::Motion),
            "frame-wise" => Ok(AttentionMode::FrameWise),
            other => Err(Error::InvalidArgument(format!("unknown attention mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    /// Query/key window length in frames.
    pub m: usize,
    /// Prediction horizon in frames.
    pub t: usize,
    /// Embedding width (also the hidden width of the first convolution).
    pub d: usize,
    pub level: Level,
    /// Kernel sizes of the two convolutions in motion mode.
    pub kernels: (usize, usize),
    pub mode: AttentionMode,
    /// DCT coefficients kept per value row.
    pub n_keep: usize,
    /// Share one encoder pair across equally sized joint-level parts.
    pub share_joint_nets: bool,
    /// Start the key encoder as a copy of a sign-paired query encoder, so
    /// initial scores measure self-similarity.
    pub matched_init: bool,
}

impl AttentionConfig {
    pub fn new(m: usize, t: usize, d: usize, level: Level, kernels: (usize, usize)) -> Self {
        Self {
            m,
            t,
            d,
            level,
            kernels,
            mode: AttentionMode::Motion,
            n_keep: m + t,
            share_joint_nets: true,
            matched_init: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.t < 1 || self.d < 1 {
            return Err(Error::InvalidArgument(format!(
                "need M >= 2, T >= 1, d >= 1 (got M={}, T={}, d={})",
                self.m, self.t, self.d
            )));
        }
        let (k1, k2) = self.kernels;
        if self.mode == AttentionMode::Motion && (k1 == 0 || k2 == 0 || k1 + k2 - 1 != self.m) {
            return Err(Error::InvalidArgument(format!(
                "kernels {k1},{k2} give a receptive field of {} frames, expected M={}",
                (k1 + k2).saturating_sub(1),
                self.m
            )));
        }
        if self.n_keep == 0 || self.n_keep > self.m + self.t {
            return Err(Error::InvalidArgument(format!(
                "n_keep {} outside 1..={}",
                self.n_keep,
                self.m + self.t
            )));
        }
        Ok(())
    }

    /// Kernel sizes actually used: `(1, 1)` in frame-wise mode.
    pub fn effective_kernels(&self) -> (usize, usize) {
        match self.mode {
            AttentionMode::Motion => self.kernels,
            AttentionMode::FrameWise => (1, 1),
        }
    }

    /// Frames seen by one key or query.
    pub fn window(&self) -> usize {
        let (k1, k2) = self.effective_kernels();
        k1 + k2 - 1
    }

    pub fn value_len(&self) -> usize {
        self.m + self.t
    }
}

/// Number of key-value pairs for a history of `n` frames.
pub fn bank_size(n: usize, m: usize, t: usize) -> usize {
    (n + 1).saturating_sub(m + t)
}

/// Sub-sequence dictionary of one attention level.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyValueBank {
    m: usize,
    t: usize,
    window: usize,
    n_keep: usize,
    partition: PartPartition,
    /// `K × N` history.
    history: Tensor,
    /// Per part, `n_bank × (K_p · n_keep)`: row `i` is the flattened DCT of
    /// sub-sequence `i`.
    values: Vec<Tensor>,
    /// Per part, `d × n_bank` encoded keys, when computed.
    encoded_keys: Option<Vec<Tensor>>,
}

fn part_values(history: &Tensor, group: &[usize], start: usize, count: usize, len: usize, n_keep: usize) -> Result<Tensor> {
    let rows = history.select_rows(group)?;
    let mut data = Vec::with_capacity(count * group.len() * n_keep);
    for i in start..start + count {
        let c = dct(&rows.slice_cols(i, i + len)?)?;
        let kept = c.coeffs().slice_cols(0, n_keep)?;
        data.extend_from_slice(kept.data());
    }
    Tensor::matrix(count, group.len() * n_keep, data)
}

/// Builds the key-value bank of a `K × N` history.
pub fn build_bank(history: &Tensor, cfg: &AttentionConfig, partition: &PartPartition) -> Result<KeyValueBank> {
    cfg.validate()?;
    let (k, n) = history.expect_matrix("build_bank")?;
    if k != partition.k() {
        return Err(Error::InvalidArgument(format!(
            "history has {k} coordinates, partition covers {}",
            partition.k()
        )));
    }
    let len = cfg.value_len();
    if n < len {
        return Err(Error::HistoryTooShort { needed: len, got: n });
    }
    let count = bank_size(n, cfg.m, cfg.t);
    let values = partition
        .groups()
        .iter()
        .map(|g| part_values(history, g, 0, count, len, cfg.n_keep))
        .collect::<Result<Vec<_>>>()?;
    Ok(KeyValueBank {
        m: cfg.m,
        t: cfg.t,
        window: cfg.window(),
        n_keep: cfg.n_keep,
        partition: partition.clone(),
        history: history.clone(),
        values,
        encoded_keys: None,
    })
}

/// Frame-wise variant: keys are the last frame of each key window and the
/// query is the last observed frame. Values are unchanged.
pub fn frame_wise_bank(history: &Tensor, cfg: &AttentionConfig, partition: &PartPartition) -> Result<KeyValueBank> {
    let cfg = AttentionConfig {
        mode: AttentionMode::FrameWise,
        ..cfg.clone()
    };
    build_bank(history, &cfg, partition)
}

/// Appends `T` predicted frames (`K × T`) to the history and adds the `T`
/// sub-sequences they complete.
pub fn extend_bank(bank: &KeyValueBank, predicted: &Tensor) -> Result<KeyValueBank> {
    let (k, t) = predicted.expect_matrix("extend_bank")?;
    if k != bank.history.rows() || t != bank.t {
        return Err(Error::Shape {
            op: "extend_bank",
            lhs: vec![bank.history.rows(), bank.t],
            rhs: predicted.shape().to_vec(),
        });
    }
    let history = Tensor::concat_cols(&[&bank.history, predicted])?;
    let old = bank.len();
    let new = bank_size(history.cols(), bank.m, bank.t);
    let len = bank.m + bank.t;
    let mut values = Vec::with_capacity(bank.values.len());
    for (g, v) in bank.partition.groups().iter().zip(&bank.values) {
        let extra = part_values(&history, g, old, new - old, len, bank.n_keep)?;
        values.push(Tensor::concat_rows(&[v, &extra])?);
    }
    Ok(KeyValueBank {
        history,
        values,
        encoded_keys: None,
        partition: bank.partition.clone(),
        ..*bank
    })
}

impl KeyValueBank {
    /// Number of key-value pairs.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Tensor::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn history(&self) -> &Tensor {
        &self.history
    }

    pub fn partition(&self) -> &PartPartition {
        &self.partition
    }

    pub fn n_keep(&self) -> usize {
        self.n_keep
    }

    /// `K_p × n_keep` DCT value of sub-sequence `i` for part `p`.
    pub fn value(&self, p: usize, i: usize) -> Tensor {
        let kp = self.partition.groups()[p].len();
        Tensor::from_parts(vec![kp, self.n_keep], self.values[p].row(i).to_vec())
    }

    /// All values of part `p`, one flattened value per row.
    pub fn values(&self, p: usize) -> &Tensor {
        &self.values[p]
    }

    /// Input to the key encoder of part `p`: every frame that starts or ends
    /// a key window, `K_p × (n_bank + window − 1)`.
    pub fn key_input(&self, p: usize) -> Result<Tensor> {
        let n = self.history.cols();
        self.history
            .select_rows(&self.partition.groups()[p])?
            .slice_cols(self.m - self.window, n - self.t)
    }

    /// The `K_p × window` key of sub-sequence `i`.
    pub fn key_window(&self, p: usize, i: usize) -> Result<Tensor> {
        let start = i + self.m - self.window;
        self.history
            .select_rows(&self.partition.groups()[p])?
            .slice_cols(start, start + self.window)
    }

    /// The `K_p × window` query (last observed frames) of part `p`.
    pub fn query_input(&self, p: usize) -> Result<Tensor> {
        let n = self.history.cols();
        self.history
            .select_rows(&self.partition.groups()[p])?
            .slice_cols(n - self.window, n)
    }

    /// Last `M` frames of the history, `K × M`.
    pub fn last_window(&self) -> Result<Tensor> {
        let n = self.history.cols();
        self.history.slice_cols(n - self.m, n)
    }

    pub fn encoded_keys(&self) -> Option<&[Tensor]> {
        self.encoded_keys.as_deref()
    }
}

/// Two valid convolutions with ReLU: `K_p × window → d`.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    pub conv1: ParamId,
    pub conv2: ParamId,
}

impl EncoderNet {
    fn new(store: &mut ParamStore, prefix: &str, c_in: usize, d: usize, kernels: (usize, usize), rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            conv1: store.glorot(format!("{prefix}.conv1"), &[d, c_in, kernels.0], rng)?,
            conv2: store.glorot(format!("{prefix}.conv2"), &[d, d, kernels.1], rng)?,
        })
    }

    /// `[K_p, L] → [d, L − window + 1]`, all entries non-negative.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let h = tape.conv1d(x, bound.var(self.conv1))?;
        let h = tape.relu(h);
        let h = tape.conv1d(h, bound.var(self.conv2))?;
        Ok(tape.relu(h))
    }
}

/// Rewrites a `[C_out, C_in, k]` weight so the second half of the output
/// channels negates the first half. With `inputs` set the input channels are
/// treated as `[+h; -h]` pairs too, so two stacked layers act as
/// `[relu(Lx); relu(-Lx)]` for a linear `L`.
fn sign_pair(w: &mut Tensor, inputs: bool) {
    let shape = w.shape().to_vec();
    let (c_out, c_in, k) = (shape[0], shape[1], shape[2]);
    let (ho, hi) = (c_out / 2, c_in / 2);
    let data = w.data_mut();
    for o in 0..c_out {
        for i in 0..c_in {
            let (so, oo) = if o >= ho && o < 2 * ho { (-1.0, o - ho) } else { (1.0, o) };
            let (si, ii) = if inputs && i >= hi && i < 2 * hi { (-1.0, i - hi) } else { (1.0, i) };
            for j in 0..k {
                data[(o * c_in + i) * k + j] = so * si * data[(oo * c_in + ii) * k + j];
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct QueryKeyNets {
    pub query: EncoderNet,
    pub key: EncoderNet,
}

/// Embeds a `K_p × window` query with the given nets.
pub fn encode_query(window: &Tensor, nets: &QueryKeyNets, store: &ParamStore, cfg: &AttentionConfig) -> Result<Vec<f64>> {
    let (_, len) = window.expect_matrix("encode_query")?;
    if len != cfg.window() {
        return Err(Error::InvalidArgument(format!(
            "query window has {len} frames, expected {}",
            cfg.window()
        )));
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let x = tape.constant(window.clone());
    let q = nets.query.encode(&mut tape, &bound, x)?;
    Ok(tape.value(q).data().to_vec())
}

/// `a_i = (q·k_i) / Σ_j (q·k_j)`, or uniform when the sum is below
/// [`SCORE_EPS`].
pub fn attention_scores(q: &[f64], keys: &[Vec<f64>]) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::InvalidArgument("empty key-value bank".into()));
    }
    let raw = keys
        .iter()
        .map(|k| {
            if k.len() != q.len() {
                return Err(Error::Shape {
                    op: "attention_scores",
                    lhs: vec![q.len()],
                    rhs: vec![k.len()],
                });
            }
            Ok(q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(normalize_scores(&raw))
}

/// Sum-normalisation with uniform fallback.
pub fn normalize_scores(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    if s >= SCORE_EPS {
        raw.iter().map(|r| r / s).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// `Σ_i a_i V_i` over equally shaped values.
pub fn aggregate(scores: &[f64], values: &[Tensor]) -> Result<Tensor> {
    if scores.len() != values.len() || values.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} values",
            scores.len(),
            values.len()
        )));
    }
    let mut out = Tensor::zeros(values[0].shape());
    for (a, v) in scores.iter().zip(values) {
        out.add_assign(&v.scale(*a))?;
    }
    Ok(out)
}

/// Places per-part priors (`K_p × L`, partition order) at their coordinate
/// rows of a `K × L` matrix.
pub fn assemble_parts(parts: &[Tensor], partition: &PartPartition) -> Result<Tensor> {
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_rows(&refs)?.select_rows(&partition.unstack_index())
}

/// Output of one attention level on a tape.
#[derive(Clone, Debug)]
pub struct PriorOutput {
    /// `K × n_keep` motion prior.
    pub u: Var,
    /// `1 × n_bank` attention scores per part.
    pub scores: Vec<Var>,
}

/// Encoders and partition of one attention level.
#[derive(Clone, Debug)]
pub struct AttentionModel {
    cfg: AttentionConfig,
    partition: PartPartition,
    nets: Vec<QueryKeyNets>,
    net_of_part: Vec<usize>,
}

impl AttentionModel {
    pub fn new(
        cfg: AttentionConfig,
        partition: PartPartition,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        if partition.level() != cfg.level {
            return Err(Error::ConfigMismatch(format!(
                "partition level {} vs attention level {}",
                partition.level().as_str(),
                cfg.level.as_str()
            )));
        }
        let kernels = cfg.effective_kernels();
        let share = cfg.level == Level::Joint && cfg.share_joint_nets;
        let mut nets: Vec<QueryKeyNets> = Vec::new();
        let mut net_sizes: Vec<usize> = Vec::new();
        let mut net_of_part = Vec::with_capacity(partition.len());
        for (p, kp) in partition.sizes().into_iter().enumerate() {
            if share {
                if let Some(i) = net_sizes.iter().position(|&s| s == kp) {
                    net_of_part.push(i);
                    continue;
                }
            }
            let tag = if share { format!("{prefix}.shared{kp}") } else { format!("{prefix}.part{p}") };
            let query = EncoderNet::new(store, &format!("{tag}.q"), kp, cfg.d, kernels, rng)?;
            let key = if cfg.matched_init {
                sign_pair(store.get_mut(query.conv1), false);
                sign_pair(store.get_mut(query.conv2), true);
                let c1 = store.get(query.conv1).clone();
                let c2 = store.get(query.conv2).clone();
                EncoderNet {
                    conv1: store.insert(format!("{tag}.k.conv1"), c1)?,
                    conv2: store.insert(format!("{tag}.k.conv2"), c2)?,
                }
            } else {
                EncoderNet::new(store, &format!("{tag}.k"), kp, cfg.d, kernels, rng)?
            };
            nets.push(QueryKeyNets { query, key });
            net_sizes.push(kp);
            net_of_part.push(nets.len() - 1);
        }
        Ok(Self {
            cfg,
            partition,
            nets,
            net_of_part,
        })
    }

    pub fn config(&self) -> &AttentionConfig {
        &self.cfg
    }

    pub fn partition(&self) -> &PartPartition {
        &self.partition
    }

    pub fn nets_for_part(&self, p: usize) -> &QueryKeyNets {
        &self.nets[self.net_of_part[p]]
    }

    pub fn build_bank(&self, history: &Tensor) -> Result<KeyValueBank> {
        build_bank(history, &self.cfg, &self.partition)
    }

    /// Computes and caches the encoded keys of `bank` (`d × n_bank` per part).
    pub fn encode_bank_keys(&self, store: &ParamStore, bank: &mut KeyValueBank) -> Result<()> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let mut keys = Vec::with_capacity(self.partition.len());
        for p in 0..self.partition.len() {
            let x = tape.constant(bank.key_input(p)?);
            let k = self.nets_for_part(p).key.encode(&mut tape, &bound, x)?;
            keys.push(tape.value(k).clone());
        }
        bank.encoded_keys = Some(keys);
        Ok(())
    }

    /// Motion prior of `bank` recorded on `tape`.
    pub fn prior(&self, tape: &mut Tape, bound: &Bound, bank: &KeyValueBank) -> Result<PriorOutput> {
        let mut parts = Vec::with_capacity(self.partition.len());
        let mut scores = Vec::with_capacity(self.partition.len());
        for (p, group) in self.partition.groups().iter().enumerate() {
            let nets = self.nets_for_part(p);
            let keys = match bank.encoded_keys() {
                Some(cached) if !tape_needs_grad(bound) => tape.constant(cached[p].clone()),
                _ => {
                    let x = tape.constant(bank.key_input(p)?);
                    nets.key.encode(tape, bound, x)?
                }
            };
            let qx = tape.constant(bank.query_input(p)?);
            let q = nets.query.encode(tape, bound, qx)?;
            let qt = tape.transpose(q)?;
            let raw = tape.matmul(qt, keys)?;
            let a = tape.normalize_sum(raw, SCORE_EPS)?;
            let vals = tape.constant(bank.values(p).clone());
            let u = tape.matmul(a, vals)?;
            parts.push(tape.reshape(u, &[group.len(), bank.n_keep()])?);
            scores.push(a);
        }
        let stacked = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts)? };
        let order = self.partition.unstack_index();
        let u = if order.iter().enumerate().all(|(i, &r)| i == r) {
            stacked
        } else {
            tape.select_rows(stacked, &order)?
        };
        Ok(PriorOutput { u, scores })
    }
}

/// Cached key encodings are only valid when parameters are frozen on the tape.
fn tape_needs_grad(bound: &Bound) -> bool {
    bound.trainable()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::{idct, DctCoeffs};
    use crate::numerics::seeded_rng;
    use crate::pose::make_partition;
    use rand::Rng;

    fn random(k: usize, n: usize, seed: u64) -> Tensor {
        let mut rng = seeded_rng(seed);
        Tensor::matrix(k, n, (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn cfg(level: Level) -> AttentionConfig {
        AttentionConfig::new(10, 10, 8, level, (6, 5))
    }

    #[test]
    fn bank_sizes() {
        let part = make_partition(6, 3, Level::Pose, None).unwrap();
        assert_eq!(build_bank(&random(6, 50, 1), &cfg(Level::Pose), &part).unwrap().len(), 31);
        assert_eq!(build_bank(&random(6, 20, 1), &cfg(Level::Pose), &part).unwrap().len(), 1);
        assert!(matches!(
            build_bank(&random(6, 19, 1), &cfg(Level::Pose), &part),
            Err(Error::HistoryTooShort { needed: 20, got: 19 })
        ));
    }

    #[test]
    fn values_decode_to_sub_sequences() {
        let h = random(6, 30, 2);
        let part = make_partition(6, 3, Level::Joint, None).unwrap();
        let bank = build_bank(&h, &cfg(Level::Joint), &part).unwrap();
        assert_eq!(bank.partition().len(), 2);
        for p in 0..2 {
            for i in 0..bank.len() {
                let x = idct(&DctCoeffs::new(bank.value(p, i)).unwrap());
                let want = h.select_rows(&part.groups()[p]).unwrap().slice_cols(i, i + 20).unwrap();
                assert!(x.max_abs_diff(&want) < 1e-9);
            }
        }
    }

    #[test]
    fn scores_arithmetic_and_fallback() {
        let s = normalize_scores(&[2.0, 1.0, 1.0]);
        assert_eq!(s, vec![0.5, 0.25, 0.25]);
        assert_eq!(attention_scores(&[1.0], &[vec![3.0]]).unwrap(), vec![1.0]);
        let u = attention_scores(&[0.0, 0.0], &[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(u, vec![1.0 / 3.0; 3]);
        assert!(attention_scores(&[1.0], &[]).is_err());
    }

    #[test]
    fn aggregate_one_hot_and_identical() {
        let v: Vec<Tensor> = (0..3).map(|i| random(2, 4, i)).collect();
        assert_eq!(aggregate(&[0.0, 1.0, 0.0], &v).unwrap(), v[1]);
        let same = vec![v[0].clone(); 3];
        let u = aggregate(&[0.2, 0.3, 0.5], &same).unwrap();
        assert!(u.max_abs_diff(&v[0]) < 1e-15);
    }

    #[test]
    fn receptive_field_gives_single_query_position() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        let part = make_partition(6, 3, Level::Pose, None).unwrap();
        let model = AttentionModel::new(cfg(Level::Pose), part, &mut store, "att", &mut rng).unwrap();
        let q = encode_query(&random(6, 10, 3), model.nets_for_part(0), &store, model.config()).unwrap();
        assert_eq!(q.len(), 8);
        assert!(q.iter().all(|&v| v >= 0.0));
        assert!(encode_query(&random(6, 9, 3), model.nets_for_part(0), &store, model.config()).is_err());
        store.zero_all();
        let q = encode_query(&random(6, 10, 3), model.nets_for_part(0), &store, model.config()).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_law_enforced() {
        let mut c = cfg(Level::Pose);
        c.kernels = (5, 5);
        assert!(c.validate().is_err());
        c.mode = AttentionMode::FrameWise;
        assert!(c.validate().is_ok());
        assert_eq!(c.window(), 1);
    }

    #[test]
    fn frame_wise_bank_same_size_with_single_frame_keys() {
        let h = random(6, 50, 4);
        let part = make_partition(6, 3, Level::Pose, None).unwrap();
        let fw = frame_wise_bank(&h, &cfg(Level::Pose), &part).unwrap();
        let mo = build_bank(&h, &cfg(Level::Pose), &part).unwrap();
        assert_eq!(fw.len(), mo.len());
        assert_eq!(fw.values(0), mo.values(0));
        assert_eq!(fw.key_window(0, 3).unwrap(), h.slice_cols(12, 13).unwrap());
        assert_eq!(fw.query_input(0).unwrap(), h.slice_cols(49, 50).unwrap());
    }

    #[test]
    fn extension_matches_rebuild() {
        let full = random(6, 70, 5);
        let part = make_partition(6, 3, Level::Joint, None).unwrap();
        let c = cfg(Level::Joint);
        let bank = build_bank(&full.slice_cols(0, 50).unwrap(), &c, &part).unwrap();
        let once = extend_bank(&bank, &full.slice_cols(50, 60).unwrap()).unwrap();
        assert_eq!(once.len(), 41);
        let twice = extend_bank(&once, &full.slice_cols(60, 70).unwrap()).unwrap();
        assert_eq!(twice, build_bank(&full, &c, &part).unwrap());
        assert!(extend_bank(&bank, &full.slice_cols(50, 55).unwrap()).is_err());
    }
}
