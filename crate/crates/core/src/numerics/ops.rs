use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

/// `sqrt(2/pi)` of the tanh GELU approximation.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh GELU approximation.
pub const GELU_COEFF: f64 = 0.044_715;

/// `c (+)= a * b` for `a: [m x k]`, `b: [k x n]`, `c: [m x n]`, every operand
/// addressed through `(row stride, column stride)` pairs so column blocks and
/// transposed views need no copies.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs out of bounds");
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs out of bounds");
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: output out of bounds");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above keep every access inside the borrowed
    // slices, and `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
) {
    gemm_strided(m, k, n, a, sa, b, sb, c, (n, 1), false);
}

fn require_rank2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return dim_err(format!("{what} must be a matrix, got shape {:?}", t.shape()));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Matrix product `a * b`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_rank2(a, "matmul lhs")?;
    let (k2, n) = require_rank2(b, "matmul rhs")?;
    if k != k2 {
        return dim_err(format!(
            "matmul: {:?} x {:?} inner extents differ",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), &mut out);
    Tensor::new(vec![m, n], out)
}

/// `a * b^T` where `a` is viewed as `[rows x k]` and `b` is `[n x k]`.
/// Leading axes of `a` are preserved: `[.., k] -> [.., n]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, k) = require_rank2(b, "matmul_nt rhs")?;
    if a.cols() != k {
        return dim_err(format!(
            "matmul_nt: {:?} x {:?}^T inner extents differ",
            a.shape(),
            b.shape()
        ));
    }
    let m = a.rows();
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), (k, 1), b.data(), (1, k), &mut out);
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}

/// `a^T * b` for `a: [k x m]`, `b: [k x n]` (leading axes of both flattened
/// into `k`).
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return dim_err(format!(
            "matmul_tn: {:?}^T x {:?} inner extents differ",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), (1, m), b.data(), (n, 1), &mut out);
    Tensor::new(vec![m, n], out)
}

/// Softmax over the last axis, max-subtracted. NaN inputs propagate to
/// NaN outputs in their row.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backward of a row softmax: given probabilities `p` and upstream `dp`,
/// returns `p * (dp - sum(dp * p))` per row.
pub fn softmax_backward_rows(p: &Tensor, dp: &Tensor) -> Tensor {
    let c = p.cols();
    let mut out = dp.clone();
    for (prow, drow) in p.data().chunks_exact(c).zip(out.data_mut().chunks_exact_mut(c)) {
        let dot: f64 = prow.iter().zip(drow.iter()).map(|(a, b)| a * b).sum();
        for (d, &pv) in drow.iter_mut().zip(prow) {
            *d = pv * (*d - dot);
        }
    }
    out
}

/// Saved state for [`layer_norm_backward`].
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Layer norm over the last axis; `eps` is added to the variance.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_forward(x, gain, bias, eps).map(|(y, _)| y)
}

pub fn layer_norm_forward(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return dim_err(format!(
            "layer_norm: width {d} vs gain {:?} / bias {:?}",
            gain.shape(),
            bias.shape()
        ));
    }
    let mut xhat = x.clone();
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for (hrow, yrow) in xhat
        .data_mut()
        .chunks_exact_mut(d)
        .zip(y.data_mut().chunks_exact_mut(d))
    {
        let mean = hrow.iter().sum::<f64>() / d as f64;
        let var = hrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for ((h, yv), (g, b)) in hrow
            .iter_mut()
            .zip(yrow.iter_mut())
            .zip(gain.data().iter().zip(bias.data()))
        {
            *h = (*h - mean) * is;
            *yv = *h * g + b;
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Tensor,
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = dy.cols();
    let mut dx = dy.clone();
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    let mut dxhat = vec![0.0; d];
    for ((dxrow, xrow), &is) in dx
        .data_mut()
        .chunks_exact_mut(d)
        .zip(cache.xhat.data().chunks_exact(d))
        .zip(&cache.inv_std)
    {
        for j in 0..d {
            dgain[j] += dxrow[j] * xrow[j];
            dbias[j] += dxrow[j];
            dxhat[j] = dxrow[j] * gain.data()[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dxrow[j] = is * (dxhat[j] - mean_d - xrow[j] * mean_dx);
        }
    }
    (dx, Tensor::vector(&dgain), Tensor::vector(&dbias))
}

fn gelu_scalar(x: f64) -> f64 {
    let t = (GELU_SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let t = (GELU_SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh();
    0.5 * (1.0 + t)
        + 0.5 * x * (1.0 - t * t) * GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x)
}

/// Tanh-approximated GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

/// `dy * gelu'(x)`, elementwise.
pub fn gelu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut out = dy.clone();
    for (d, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        *d *= gelu_grad_scalar(xv);
    }
    out
}
