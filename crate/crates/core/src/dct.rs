//! Orthonormal DCT over the temporal axis of `K × L` trajectories.
//!
//! Row `k` of the input is the trajectory of one coordinate. Coefficient `l`
//! (0-based) is
//!
//! ```text
//! C[k][l] = sqrt(2/L) * w(l) * Σ_n x[k][n] cos(π (2n + 1) l / (2L)),   w(0) = 1/√2, w(l>0) = 1
//! ```
//!
//! and the inverse uses the same basis transposed. Both directions are dense
//! `L × L` matrix products, which keeps the adjoint exact when they appear on a
//! [`Tape`].

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// `L × L` matrix whose row `l` is the `l`-th basis vector.
pub fn dct_basis(len: usize) -> Tensor {
    let scale = (2.0 / len as f64).sqrt();
    let mut data = Vec::with_capacity(len * len);
    for l in 0..len {
        let w = if l == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        for n in 0..len {
            let angle = std::f64::consts::PI * (2 * n + 1) as f64 * l as f64 / (2 * len) as f64;
            data.push(scale * w * angle.cos());
        }
    }
    Tensor::from_parts(vec![len, len], data)
}

/// DCT coefficients of `K` trajectories; columns at or beyond `n_keep` are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DctCoeffs {
    coeffs: Tensor,
    n_keep: usize,
}

impl DctCoeffs {
    pub fn new(coeffs: Tensor) -> Result<Self> {
        let (_, l) = coeffs.expect_matrix("dct_coeffs")?;
        Ok(Self { coeffs, n_keep: l })
    }

    pub fn coeffs(&self) -> &Tensor {
        &self.coeffs
    }

    pub fn into_tensor(self) -> Tensor {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.cols() == 0
    }

    pub fn n_keep(&self) -> usize {
        self.n_keep
    }
}

pub fn dct(x: &Tensor) -> Result<DctCoeffs> {
    let (_, len) = x.expect_matrix("dct")?;
    if len == 0 {
        return Err(Error::InvalidArgument("dct of an empty trajectory".into()));
    }
    let c = x.matmul(&dct_basis(len).transpose()?)?;
    DctCoeffs::new(c)
}

pub fn idct(c: &DctCoeffs) -> Tensor {
    c.coeffs
        .matmul(&dct_basis(c.len()))
        .expect("coefficient matrix is K x L by construction")
}

/// Zeroes every coefficient from column `n_keep` on.
pub fn truncate(c: &DctCoeffs, n_keep: usize) -> Result<DctCoeffs> {
    let len = c.len();
    if n_keep == 0 || n_keep > len {
        return Err(Error::InvalidArgument(format!("n_keep {n_keep} outside 1..={len}")));
    }
    let mut t = c.coeffs.clone();
    let rows = t.rows();
    for r in 0..rows {
        for l in n_keep..len {
            t.set(r, l, 0.0);
        }
    }
    Ok(DctCoeffs { coeffs: t, n_keep })
}

/// Appends `t` copies of the last column of a `K × M` window.
pub fn pad_replicate(window: &Tensor, t: usize) -> Result<Tensor> {
    let (k, m) = window.expect_matrix("pad_replicate")?;
    if m == 0 {
        return Err(Error::InvalidArgument("cannot pad an empty window".into()));
    }
    let mut data = Vec::with_capacity(k * (m + t));
    for r in 0..k {
        let row = window.row(r);
        data.extend_from_slice(row);
        data.extend(std::iter::repeat_n(row[m - 1], t));
    }
    Ok(Tensor::from_parts(vec![k, m + t], data))
}

/// Tape-tracked DCT of a `K × L` variable, keeping the first `n_keep` columns.
pub fn dct_var(tape: &mut Tape, x: Var, n_keep: usize) -> Result<Var> {
    let len = tape.shape(x)[1];
    let basis_t = dct_basis(len).slice_rows(0, n_keep)?.transpose()?;
    let b = tape.constant(basis_t);
    tape.matmul(x, b)
}

/// Tape-tracked inverse DCT of `K × n_keep` coefficients onto `len` frames.
pub fn idct_var(tape: &mut Tape, c: Var, len: usize) -> Result<Var> {
    let n_keep = tape.shape(c)[1];
    let b = tape.constant(dct_basis(len).slice_rows(0, n_keep)?);
    tape.matmul(c, b)
}
