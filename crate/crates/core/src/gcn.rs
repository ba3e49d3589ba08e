//! Graph-convolutional predictor over DCT coefficients.
//!
//! Every layer computes `act(A · H · W)` with a trainable `K × K` adjacency
//! `A`. The predictor maps `[D | U…]` to a residual `R` over the padded-window
//! coefficients `D`, and the poses are decoded from `D + R`.

use rand_chacha::ChaCha8Rng;

use crate::dct::{dct, dct_basis, idct_var, pad_replicate};
use crate::error::{Error, Result};
use crate::numerics::{Bound, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug)]
pub struct GcnLayer {
    pub a: ParamId,
    pub w: ParamId,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        f_in: usize,
        f_out: usize,
        activation: Activation,
        identity_adjacency: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let a = if identity_adjacency {
            store.insert(format!("{prefix}.A"), Tensor::eye(k))?
        } else {
            store.glorot(format!("{prefix}.A"), &[k, k], rng)?
        };
        let w = store.glorot(format!("{prefix}.W"), &[f_in, f_out], rng)?;
        Ok(Self { a, w, activation })
    }

    /// Same as [`GcnLayer::new`] with `W` initialised to zero.
    pub fn zero_output(store: &mut ParamStore, prefix: &str, k: usize, f_in: usize, f_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let a = store.glorot(format!("{prefix}.A"), &[k, k], rng)?;
        let w = store.zeros(format!("{prefix}.W"), &[f_in, f_out])?;
        Ok(Self {
            a,
            w,
            activation: Activation::Identity,
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        let ah = tape.matmul(bound.var(self.a), h)?;
        let out = tape.matmul(ah, bound.var(self.w))?;
        Ok(match self.activation {
            Activation::Tanh => tape.tanh(out),
            Activation::Identity => out,
        })
    }
}

/// `act(A · H · W)` on plain tensors.
pub fn gcn_layer_forward(h: &Tensor, a: &Tensor, w: &Tensor, activation: Activation) -> Result<Tensor> {
    let out = a.matmul(h)?.matmul(w)?;
    Ok(match activation {
        Activation::Tanh => out.map(f64::tanh),
        Activation::Identity => out,
    })
}

/// Input layer, residual blocks of two tanh layers, linear output layer.
#[derive(Clone, Debug)]
pub struct GcnStack {
    pub input: GcnLayer,
    pub blocks: Vec<[GcnLayer; 2]>,
    pub output: GcnLayer,
}

/// Sizes of a [`GcnStack`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackShape {
    pub k: usize,
    pub f_in: usize,
    pub hidden: usize,
    pub f_out: usize,
    pub blocks: usize,
}

impl StackShape {
    /// Parameters in a stack of this shape.
    pub fn param_count(&self) -> usize {
        let layers = 2 + 2 * self.blocks;
        layers * self.k * self.k
            + self.f_in * self.hidden
            + 2 * self.blocks * self.hidden * self.hidden
            + self.hidden * self.f_out
    }
}

impl GcnStack {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        shape: StackShape,
        identity_adjacency: bool,
        zero_output: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let StackShape {
            k,
            f_in,
            hidden,
            f_out,
            blocks,
        } = shape;
        let input = GcnLayer::new(store, &format!("{prefix}.in"), k, f_in, hidden, Activation::Tanh, identity_adjacency, rng)?;
        let blocks = (0..blocks)
            .map(|b| {
                let layer = |i: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng| {
                    GcnLayer::new(
                        store,
                        &format!("{prefix}.block{b}.{i}"),
                        k,
                        hidden,
                        hidden,
                        Activation::Tanh,
                        identity_adjacency,
                        rng,
                    )
                };
                Ok([layer(0, store, rng)?, layer(1, store, rng)?])
            })
            .collect::<Result<Vec<_>>>()?;
        let output = if zero_output {
            GcnLayer::zero_output(store, &format!("{prefix}.out"), k, hidden, f_out, rng)?
        } else {
            GcnLayer::new(store, &format!("{prefix}.out"), k, hidden, f_out, Activation::Identity, identity_adjacency, rng)?
        };
        Ok(Self { input, blocks, output })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = self.input.forward(tape, bound, x)?;
        for [l0, l1] in &self.blocks {
            let y = l0.forward(tape, bound, h)?;
            let y = l1.forward(tape, bound, y)?;
            h = tape.add(h, y)?;
        }
        self.output.forward(tape, bound, h)
    }

    pub fn layers(&self) -> impl Iterator<Item = &GcnLayer> {
        std::iter::once(&self.input)
            .chain(self.blocks.iter().flatten())
            .chain(std::iter::once(&self.output))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictorConfig {
    pub k: usize,
    pub m: usize,
    pub t: usize,
    pub f: usize,
    pub blocks: usize,
    pub n_keep: usize,
    /// Number of `K × n_keep` priors concatenated after `D`.
    pub priors: usize,
    pub identity_adjacency: bool,
}

impl PredictorConfig {
    pub fn len(&self) -> usize {
        self.m + self.t
    }

    pub fn shape(&self) -> StackShape {
        StackShape {
            k: self.k,
            f_in: (1 + self.priors) * self.n_keep,
            hidden: self.f,
            f_out: self.n_keep,
            blocks: self.blocks,
        }
    }
}

/// Tape handles of one prediction.
#[derive(Clone, Copy, Debug)]
pub struct PredictionVars {
    /// `K × n_keep` predicted coefficients `D + R`.
    pub coeffs: Var,
    /// `K × (M + T)` decoded poses; the last `T` columns are the future.
    pub poses: Var,
}

#[derive(Clone, Debug)]
pub struct Predictor {
    cfg: PredictorConfig,
    stack: GcnStack,
}

impl Predictor {
    pub fn new(cfg: PredictorConfig, store: &mut ParamStore, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.n_keep == 0 || cfg.n_keep > cfg.len() || cfg.f == 0 || cfg.k == 0 {
            return Err(Error::InvalidArgument(format!("invalid predictor config {cfg:?}")));
        }
        let stack = GcnStack::new(store, prefix, cfg.shape(), cfg.identity_adjacency, false, rng)?;
        Ok(Self { cfg, stack })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn stack(&self) -> &GcnStack {
        &self.stack
    }

    /// Padded window and its truncated coefficients `D`.
    pub fn padded_inputs(&self, window: &Tensor) -> Result<(Tensor, Tensor)> {
        let (k, m) = window.expect_matrix("predict")?;
        if k != self.cfg.k || m != self.cfg.m {
            return Err(Error::Shape {
                op: "predict",
                lhs: vec![self.cfg.k, self.cfg.m],
                rhs: vec![k, m],
            });
        }
        let padded = pad_replicate(window, self.cfg.t)?;
        let d = dct(&padded)?.into_tensor().slice_cols(0, self.cfg.n_keep)?;
        Ok((padded, d))
    }

    /// Predicts from the last `M` observed frames (`K × M`) and the priors.
    ///
    /// With all coefficients kept, poses are `padded + idct(R)`, so a zero
    /// residual reproduces the padded window exactly.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, window: &Tensor, priors: &[Var]) -> Result<PredictionVars> {
        if priors.len() != self.cfg.priors {
            return Err(Error::InvalidArgument(format!(
                "predictor expects {} priors, got {}",
                self.cfg.priors,
                priors.len()
            )));
        }
        let (padded, d) = self.padded_inputs(window)?;
        let len = self.cfg.len();
        let base = if self.cfg.n_keep == len {
            padded
        } else {
            d.matmul(&dct_basis(len).slice_rows(0, self.cfg.n_keep)?)?
        };
        let d = tape.constant(d);
        let mut cols = vec![d];
        cols.extend_from_slice(priors);
        let x = tape.concat_cols(&cols)?;
        let r = self.stack.forward(tape, bound, x)?;
        let coeffs = tape.add(d, r)?;
        let decoded = idct_var(tape, r, len)?;
        let base = tape.constant(base);
        let poses = tape.add(base, decoded)?;
        Ok(PredictionVars { coeffs, poses })
    }

    /// Plain-tensor prediction: `(coefficients, poses)`.
    pub fn predict(&self, store: &ParamStore, window: &Tensor, priors: &[Tensor]) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let priors: Vec<Var> = priors.iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward(&mut tape, &bound, window, &priors)?;
        Ok((tape.value(out.coeffs).clone(), tape.value(out.poses).clone()))
    }
}
