//! Building blocks with hand-derived backward passes: affine maps, layer
//! norm, multi-head attention and rotary position encoding.

use crate::error::Result;
use crate::numerics::{
    gemm_strided, layer_norm_backward, layer_norm_forward, matmul, matmul_nt, softmax_in_place,
    LayerNormCache, Rng, Tensor,
};
use crate::params::{join, Parameters};

pub const LN_EPS: f64 = 1e-5;
pub const ROPE_BASE: f64 = 10_000.0;

/// Affine map `y = x W^T + b` with `W: [out x in]`; the bias is optional.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Option<Tensor>,
}

impl Linear {
    pub fn init(input: usize, output: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            w: Tensor::randn(&[output, input], std, rng),
            b: Some(Tensor::zeros(&[output])),
        }
    }

    pub fn init_no_bias(input: usize, output: usize, std: f64, rng: &mut Rng) -> Self {
        Self {
            w: Tensor::randn(&[output, input], std, rng),
            b: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = matmul_nt(x, &self.w)?;
        if let Some(b) = &self.b {
            y.add_row_vector(b)?;
        }
        Ok(y)
    }

    /// Accumulates weight and bias gradients into `grad`, returns `dx`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Linear) -> Result<Tensor> {
        accumulate_weight_grad(x, dy, &mut grad.w);
        if let Some(gb) = &mut grad.b {
            gb.add_assign(&dy.sum_rows())?;
        }
        matmul(dy, &self.w)
    }
}

/// `dw[out x in] += dy^T x`
pub(crate) fn accumulate_weight_grad(x: &Tensor, dy: &Tensor, dw: &mut Tensor) {
    let (rows, input, output) = (x.rows(), x.cols(), dy.cols());
    gemm_strided(
        output,
        rows,
        input,
        dy.data(),
        (1, output),
        x.data(),
        (input, 1),
        dw.data_mut(),
        (input, 1),
        true,
    );
}

impl Parameters for Linear {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "w"), &self.w));
        if let Some(b) = &self.b {
            out.push((join(prefix, "b"), b));
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "w"), &mut self.w));
        if let Some(b) = &mut self.b {
            out.push((join(prefix, "b"), b));
        }
    }
}

/// Layer norm parameters (`eps = LN_EPS`).
#[derive(Clone, Debug, PartialEq)]
pub struct Norm {
    pub g: Tensor,
    pub b: Tensor,
}

impl Norm {
    pub fn new(d: usize) -> Self {
        Self {
            g: Tensor::full(&[d], 1.0),
            b: Tensor::zeros(&[d]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        layer_norm_forward(x, &self.g, &self.b, LN_EPS)
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Tensor, grad: &mut Norm) -> Tensor {
        let (dx, dg, db) = layer_norm_backward(cache, &self.g, dy);
        for (a, b) in grad.g.data_mut().iter_mut().zip(dg.data()) {
            *a += b;
        }
        for (a, b) in grad.b.data_mut().iter_mut().zip(db.data()) {
            *a += b;
        }
        dx
    }
}

impl Parameters for Norm {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "g"), &self.g));
        out.push((join(prefix, "b"), &self.b));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "g"), &mut self.g));
        out.push((join(prefix, "b"), &mut self.b));
    }
}

/// Split a `[rows x sum(widths)]` matrix into column blocks.
pub(crate) fn split_cols(x: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    let (rows, cols) = (x.rows(), x.cols());
    debug_assert_eq!(widths.iter().sum::<usize>(), cols);
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&x.data()[r * cols + start..r * cols + start + w]);
            }
            start += w;
            Tensor::new(vec![rows, w], data).expect("column block")
        })
        .collect()
}

pub(crate) fn concat_cols(parts: &[&Tensor]) -> Tensor {
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::new(vec![rows, cols], data).expect("concatenated columns")
}

/// Scaled dot-product attention over one sequence of `len` rows of width
/// `d`, heads taken as contiguous column blocks. Writes the attended values
/// into `out` and returns the per-head probability matrices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    len: usize,
    d: usize,
    heads: usize,
    causal: bool,
    out: &mut [f64],
) -> Vec<Tensor> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * dh;
        let mut s = vec![0.0; len * len];
        gemm_strided(len, dh, len, &q[off..], (d, 1), &k[off..], (1, d), &mut s, (len, 1), false);
        for (i, row) in s.chunks_exact_mut(len).enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = if causal && j > i { f64::NEG_INFINITY } else { *x * scale };
            }
            softmax_in_place(row);
        }
        gemm_strided(len, len, dh, &s, (len, 1), &v[off..], (d, 1), &mut out[off..], (d, 1), false);
        probs.push(Tensor::new(vec![len, len], s).expect("attention probabilities"));
    }
    probs
}

/// Backward of [`attention_forward`]; overwrites `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[Tensor],
    dout: &[f64],
    len: usize,
    d: usize,
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let heads = probs.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dp = vec![0.0; len * len];
    for (h, p) in probs.iter().enumerate() {
        let off = h * dh;
        let p = p.data();
        gemm_strided(len, len, dh, p, (1, len), &dout[off..], (d, 1), &mut dv[off..], (d, 1), false);
        gemm_strided(len, dh, len, &dout[off..], (d, 1), &v[off..], (1, d), &mut dp, (len, 1), false);
        for (prow, drow) in p.chunks_exact(len).zip(dp.chunks_exact_mut(len)) {
            let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
            for (dv, &pv) in drow.iter_mut().zip(prow) {
                *dv = pv * (*dv - dot) * scale;
            }
        }
        gemm_strided(len, len, dh, &dp, (len, 1), &k[off..], (d, 1), &mut dq[off..], (d, 1), false);
        gemm_strided(len, len, dh, &dp, (1, len), &q[off..], (d, 1), &mut dk[off..], (d, 1), false);
    }
}

/// Rotate consecutive pairs of each head's columns by `pos * ROPE_BASE^(-2i/dh)`,
/// where `pos = start_pos + row`. `inverse` applies the transpose rotation,
/// which is also the backward pass.
pub(crate) fn apply_rope(x: &mut [f64], d: usize, heads: usize, start_pos: usize, inverse: bool) {
    let dh = d / heads;
    let half = dh / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| ROPE_BASE.powf(-((2 * i) as f64) / dh as f64))
        .collect();
    for (r, row) in x.chunks_exact_mut(d).enumerate() {
        let pos = (start_pos + r) as f64;
        for (i, f) in freqs.iter().enumerate() {
            let (mut s, c) = (pos * f).sin_cos();
            if inverse {
                s = -s;
            }
            for h in 0..heads {
                let j = h * dh + 2 * i;
                let (a, b) = (row[j], row[j + 1]);
                row[j] = a * c - b * s;
                row[j + 1] = a * s + b * c;
            }
        }
    }
}
