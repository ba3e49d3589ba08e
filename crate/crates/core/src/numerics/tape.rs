//! Reverse-mode differentiation over a linear tape.
//!
//! Every primitive evaluates eagerly and records its inputs. `backward` walks
//! the tape in reverse order and accumulates vector-Jacobian products into the
//! tracked leaves. Nodes that do not depend on any tracked leaf are skipped.

use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRowBias(Var, Var),
    RowScale(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Abs(Var),
    Sqrt(Var),
    Conv1d {
        input: Var,
        weight: Var,
        cols: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SelectRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    RowNorm(Var),
    NormalizeSum { input: Var, fallback: bool },
    SoftmaxRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Ordered record of primitive operations. One writer per tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every tracked leaf of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    leaves: Vec<Var>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.grads.get(var.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    /// `(leaf, gradient)` for every tracked leaf, in creation order.
    pub fn leaves(&self) -> impl Iterator<Item = (Var, Tensor)> + '_ {
        self.leaves.iter().map(|&v| (v, self.wrt(v)))
    }
}

/// Backpropagates from a scalar `loss`; see [`Tape::backward`].
pub fn grad(tape: &Tape, loss: Var) -> Result<Gradients> {
    tape.backward(loss)
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), t))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::Transpose(a), t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), t))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "div", |x, y| x / y)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Div(a, b), t))
    }

    /// `x[r×c] + b[c]`, broadcasting the bias over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let (r, c) = xv.expect_matrix("add_row_bias")?;
        if bv.numel() != c {
            return Err(shape_err("add_row_bias", xv, bv));
        }
        let mut out = xv.data().to_vec();
        for i in 0..r {
            for (o, &bb) in out[i * c..(i + 1) * c].iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let out = Tensor::from_parts(vec![r, c], out);
        let t = self.tracked(&[x, b]);
        Ok(self.push(out, Op::AddRowBias(x, b), t))
    }

    /// Multiplies row `i` of `x[r×c]` by `w[i]` (`w` has `r` elements).
    pub fn row_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (r, c) = xv.expect_matrix("row_scale")?;
        if wv.numel() != r {
            return Err(shape_err("row_scale", xv, wv));
        }
        let mut out = xv.data().to_vec();
        for i in 0..r {
            let s = wv.data()[i];
            out[i * c..(i + 1) * c].iter_mut().for_each(|o| *o *= s);
        }
        let out = Tensor::from_parts(vec![r, c], out);
        let t = self.tracked(&[x, w]);
        Ok(self.push(out, Op::RowScale(x, w), t))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let t = self.tracked(&[a]);
        self.push(out, Op::Scale(a, s), t)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let t = self.tracked(&[a]);
        self.push(out, Op::Relu(a), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let t = self.tracked(&[a]);
        self.push(out, Op::Tanh(a), t)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let t = self.tracked(&[a]);
        self.push(out, Op::Abs(a), t)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("sqrt of a negative value".into()));
        }
        let out = self.value(a).map(f64::sqrt);
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::Sqrt(a), t))
    }

    /// Valid (unpadded) multi-channel 1D cross-correlation.
    ///
    /// `input` is `[C_in, L]`, `weight` is `[C_out, C_in, k]`; the result is
    /// `[C_out, L - k + 1]`.
    pub fn conv1d(&mut self, input: Var, weight: Var) -> Result<Var> {
        let (xv, wv) = (self.value(input), self.value(weight));
        let (c_in, len) = xv.expect_matrix("conv1d")?;
        if wv.shape().len() != 3 || wv.shape()[1] != c_in || wv.shape()[2] == 0 || wv.shape()[2] > len {
            return Err(shape_err("conv1d", xv, wv));
        }
        let (c_out, k) = (wv.shape()[0], wv.shape()[2]);
        let l_out = len - k + 1;
        let cols = im2col(xv.data(), c_in, len, k);
        let out = matmul_raw(wv.data(), &cols, c_out, c_in * k, l_out);
        let out = Tensor::from_parts(vec![c_out, l_out], out);
        let t = self.tracked(&[input, weight]);
        Ok(self.push(out, Op::Conv1d { input, weight, cols }, t))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&vals)?;
        let t = self.tracked(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), t))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&vals)?;
        let t = self.tracked(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), t))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(a).slice_cols(start, end)?;
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), t))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(a).slice_rows(start, end)?;
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start), t))
    }

    /// Gathers rows by index; repeated indices are allowed.
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let out = self.value(a).select_rows(idx)?;
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::SelectRows(a, idx.to_vec()), t))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::Reshape(a), t))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let t = self.tracked(&[a]);
        self.push(out, Op::Sum(a), t)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.numel() as f64);
        let t = self.tracked(&[a]);
        self.push(out, Op::Mean(a), t)
    }

    /// Euclidean norm of each row: `[r×c] -> [r×1]`.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.expect_matrix("row_norm")?;
        let out: Vec<f64> = (0..r)
            .map(|i| v.data()[i * c..(i + 1) * c].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::from_parts(vec![r, 1], out);
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::RowNorm(a), t))
    }

    /// Divides non-negative scores by their sum. When the sum is below `eps`
    /// the result is the uniform distribution and carries no gradient.
    pub fn normalize_sum(&mut self, a: Var, eps: f64) -> Result<Var> {
        let v = self.value(a);
        let n = v.numel();
        if n == 0 {
            return Err(Error::InvalidArgument("normalize_sum of an empty tensor".into()));
        }
        let s = v.sum();
        let fallback = !(s >= eps);
        let out = if fallback {
            v.map(|_| 1.0 / n as f64)
        } else {
            v.map(|x| x / s)
        };
        let t = self.tracked(&[a]) && !fallback;
        Ok(self.push(out, Op::NormalizeSum { input: a, fallback }, t))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.expect_matrix("softmax_rows")?;
        let mut out = v.data().to_vec();
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x = (*x - m).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        let out = Tensor::from_parts(vec![r, c], out);
        let t = self.tracked(&[a]);
        Ok(self.push(out, Op::SoftmaxRows(a), t))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, _)| Var(i))
            .collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, leaves, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Tensor| -> Result<()> {
            if !self.nodes[v.0].tracked {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot => {
                    *slot = Some(d);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                acc(*a, g.matmul(&val(*b).transpose()?)?)?;
                acc(*b, val(*a).transpose()?.matmul(g)?)?;
            }
            Op::Transpose(a) => acc(*a, g.transpose()?)?,
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), "mul", |x, y| x * y)?)?;
                acc(*b, g.zip_map(val(*a), "mul", |x, y| x * y)?)?;
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                acc(*a, g.zip_map(bv, "div", |x, y| x / y)?)?;
                let ga = g.zip_map(val(*a), "div", |x, y| x * y)?;
                acc(*b, ga.zip_map(bv, "div", |x, y| -x / (y * y))?)?;
            }
            Op::AddRowBias(x, b) => {
                let (r, c) = g.expect_matrix("add_row_bias")?;
                let mut db = vec![0.0; c];
                for i in 0..r {
                    for (d, &gv) in db.iter_mut().zip(&g.data()[i * c..(i + 1) * c]) {
                        *d += gv;
                    }
                }
                acc(*x, g.clone())?;
                acc(*b, Tensor::from_parts(val(*b).shape().to_vec(), db))?;
            }
            Op::RowScale(x, w) => {
                let (xv, wv) = (val(*x), val(*w));
                let (r, c) = g.expect_matrix("row_scale")?;
                let mut dx = g.data().to_vec();
                let mut dw = vec![0.0; r];
                for i in 0..r {
                    let s = wv.data()[i];
                    let grow = &g.data()[i * c..(i + 1) * c];
                    let xrow = &xv.data()[i * c..(i + 1) * c];
                    dw[i] = grow.iter().zip(xrow).map(|(a, b)| a * b).sum();
                    dx[i * c..(i + 1) * c].iter_mut().for_each(|d| *d *= s);
                }
                acc(*x, Tensor::from_parts(vec![r, c], dx))?;
                acc(*w, Tensor::from_parts(wv.shape().to_vec(), dw))?;
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s))?,
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), "relu", |d, x| if x > 0.0 { d } else { 0.0 })?)?,
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, "tanh", |d, y| d * (1.0 - y * y))?)?,
            Op::Abs(a) => acc(
                *a,
                g.zip_map(val(*a), "abs", |d, x| {
                    if x > 0.0 {
                        d
                    } else if x < 0.0 {
                        -d
                    } else {
                        0.0
                    }
                })?,
            )?,
            Op::Sqrt(a) => acc(
                *a,
                g.zip_map(&node.value, "sqrt", |d, y| if y > 0.0 { d / (2.0 * y) } else { 0.0 })?,
            )?,
            Op::Conv1d { input, weight, cols } => {
                let wv = val(*weight);
                let (c_out, c_in, k) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
                let len = val(*input).shape()[1];
                let l_out = len - k + 1;
                let cols_t = Tensor::from_parts(vec![c_in * k, l_out], cols.clone()).transpose()?;
                let dw = g.matmul(&cols_t)?.reshape(&[c_out, c_in, k])?;
                let w_flat_t = Tensor::from_parts(vec![c_out, c_in * k], wv.data().to_vec()).transpose()?;
                let dcols = w_flat_t.matmul(g)?;
                let mut dx = vec![0.0; c_in * len];
                for c in 0..c_in {
                    for j in 0..k {
                        let row = &dcols.data()[(c * k + j) * l_out..(c * k + j + 1) * l_out];
                        for (t, &v) in row.iter().enumerate() {
                            dx[c * len + t + j] += v;
                        }
                    }
                }
                acc(*weight, dw)?;
                acc(*input, Tensor::from_parts(vec![c_in, len], dx))?;
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    acc(p, g.slice_cols(start, start + w)?)?;
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = val(p).shape()[0];
                    acc(p, g.slice_rows(start, start + h)?)?;
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).expect_matrix("slice_cols")?;
                let w = g.shape()[1];
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                acc(*a, Tensor::from_parts(vec![r, c], d))?;
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).expect_matrix("slice_rows")?;
                let mut d = vec![0.0; r * c];
                d[start * c..start * c + g.numel()].copy_from_slice(g.data());
                acc(*a, Tensor::from_parts(vec![r, c], d))?;
            }
            Op::SelectRows(a, idx) => {
                let (r, c) = val(*a).expect_matrix("select_rows")?;
                let mut d = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for (dv, &gv) in d[i * c..(i + 1) * c].iter_mut().zip(&g.data()[k * c..(k + 1) * c]) {
                        *dv += gv;
                    }
                }
                acc(*a, Tensor::from_parts(vec![r, c], d))?;
            }
            Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape())?)?,
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item()))?,
            Op::Mean(a) => {
                let v = val(*a);
                acc(*a, Tensor::full(v.shape(), g.item() / v.numel() as f64))?;
            }
            Op::RowNorm(a) => {
                let v = val(*a);
                let (r, c) = v.expect_matrix("row_norm")?;
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let n = node.value.data()[i];
                    if n > 0.0 {
                        let s = g.data()[i] / n;
                        for j in 0..c {
                            d[i * c + j] = s * v.data()[i * c + j];
                        }
                    }
                }
                acc(*a, Tensor::from_parts(vec![r, c], d))?;
            }
            Op::NormalizeSum { input, fallback } => {
                if !*fallback {
                    let s = val(*input).sum();
                    let dot: f64 = g.data().iter().zip(node.value.data()).map(|(a, b)| a * b).sum();
                    acc(*input, g.map(|gv| (gv - dot) / s))?;
                }
            }
            Op::SoftmaxRows(a) => {
                let (r, c) = g.expect_matrix("softmax_rows")?;
                let y = node.value.data();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let gr = &g.data()[i * c..(i + 1) * c];
                    let yr = &y[i * c..(i + 1) * c];
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, Tensor::from_parts(vec![r, c], d))?;
            }
        }
        Ok(())
    }
}

/// Unfolds `[c_in, len]` into `[c_in * k, len - k + 1]` sliding windows.
fn im2col(x: &[f64], c_in: usize, len: usize, k: usize) -> Vec<f64> {
    let l_out = len - k + 1;
    let mut cols = vec![0.0; c_in * k * l_out];
    for c in 0..c_in {
        for j in 0..k {
            let dst = &mut cols[(c * k + j) * l_out..(c * k + j + 1) * l_out];
            dst.copy_from_slice(&x[c * len + j..c * len + j + l_out]);
        }
    }
    cols
}
