//! Adaptive average structure pooling of `(T, w, h, d)` feature grids and the
//! two baselines it is compared against: feeding every frame token
//! (n-frame) and temporal-plus-spatial mean pooling (vcg).
//!
//! Bin rule along each axis: output cell `i` of `out` averages input indices
//! `[floor(i*in/out), ceil((i+1)*in/out))`. Bins tile the input exactly
//! when `out` divides `in` and overlap by one index otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;
use crate::vision::FeatureGrid;

/// Target `(T', w', h')` of [`adaptive_pool`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolSpec {
    pub t_out: usize,
    pub w_out: usize,
    pub h_out: usize,
}

impl PoolSpec {
    pub fn new(t_out: usize, w_out: usize, h_out: usize) -> Self {
        Self { t_out, w_out, h_out }
    }

    pub fn validate_for(&self, t: usize, w: usize, h: usize) -> Result<()> {
        let ok = |o: usize, i: usize| (1..=i).contains(&o);
        if ok(self.t_out, t) && ok(self.w_out, w) && ok(self.h_out, h) {
            Ok(())
        } else {
            dim_err(format!(
                "pool spec ({}, {}, {}) invalid for grid ({t}, {w}, {h})",
                self.t_out, self.w_out, self.h_out
            ))
        }
    }

    pub fn token_count(&self) -> usize {
        self.t_out * self.w_out * self.h_out
    }
}

impl std::fmt::Display for PoolSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.t_out, self.w_out, self.h_out)
    }
}

/// Half-open input ranges averaged into each of `out_len` outputs.
pub fn pool_bins(in_len: usize, out_len: usize) -> Result<Vec<(usize, usize)>> {
    if out_len == 0 || out_len > in_len {
        return dim_err(format!(
            "cannot pool length {in_len} to {out_len}"
        ));
    }
    Ok((0..out_len)
        .map(|i| {
            let start = i * in_len / out_len;
            let end = ((i + 1) * in_len).div_ceil(out_len);
            (start, end)
        })
        .collect())
}

/// Mean-pool axis 1 of a row-major `[outer x len x inner]` buffer.
fn pool_axis(x: &[f64], outer: usize, len: usize, inner: usize, bins: &[(usize, usize)]) -> Vec<f64> {
    let out_len = bins.len();
    let mut y = vec![0.0; outer * out_len * inner];
    for o in 0..outer {
        for (b, &(s, e)) in bins.iter().enumerate() {
            let dst = &mut y[(o * out_len + b) * inner..(o * out_len + b + 1) * inner];
            for i in s..e {
                let src = &x[(o * len + i) * inner..(o * len + i + 1) * inner];
                for (a, v) in dst.iter_mut().zip(src) {
                    *a += v;
                }
            }
            let inv = 1.0 / (e - s) as f64;
            for a in dst.iter_mut() {
                *a *= inv;
            }
        }
    }
    y
}

/// Transpose of [`pool_axis`]: spread each output gradient evenly over its bin.
fn unpool_axis(dy: &[f64], outer: usize, len: usize, inner: usize, bins: &[(usize, usize)]) -> Vec<f64> {
    let out_len = bins.len();
    let mut dx = vec![0.0; outer * len * inner];
    for o in 0..outer {
        for (b, &(s, e)) in bins.iter().enumerate() {
            let src = &dy[(o * out_len + b) * inner..(o * out_len + b + 1) * inner];
            let inv = 1.0 / (e - s) as f64;
            for i in s..e {
                let dst = &mut dx[(o * len + i) * inner..(o * len + i + 1) * inner];
                for (a, v) in dst.iter_mut().zip(src) {
                    *a += v * inv;
                }
            }
        }
    }
    dx
}

/// Average each cell of the `(T', w', h')` output over the Cartesian product
/// of its three axis bins; the embedding axis is untouched.
pub fn adaptive_pool(grid: &FeatureGrid, spec: PoolSpec) -> Result<FeatureGrid> {
    let (t, w, h, d) = grid.dims();
    spec.validate_for(t, w, h)?;
    let (bt, bw, bh) = (
        pool_bins(t, spec.t_out)?,
        pool_bins(w, spec.w_out)?,
        pool_bins(h, spec.h_out)?,
    );
    let x = pool_axis(grid.tensor().data(), 1, t, w * h * d, &bt);
    let x = pool_axis(&x, spec.t_out, w, h * d, &bw);
    let x = pool_axis(&x, spec.t_out * spec.w_out, h, d, &bh);
    FeatureGrid::new(Tensor::new(vec![spec.t_out, spec.w_out, spec.h_out, d], x)?)
}

/// Gradient of [`adaptive_pool`] w.r.t. its input, given the output gradient
/// as `[T'*w'*h' x d]` tokens. Returns `[T*w*h x d]`.
pub fn adaptive_pool_backward(
    (t, w, h): (usize, usize, usize),
    spec: PoolSpec,
    dy: &Tensor,
) -> Result<Tensor> {
    spec.validate_for(t, w, h)?;
    let d = dy.cols();
    if dy.rows() != spec.token_count() {
        return dim_err(format!(
            "pool gradient has {} rows, spec {spec} needs {}",
            dy.rows(),
            spec.token_count()
        ));
    }
    let (bt, bw, bh) = (pool_bins(t, spec.t_out)?, pool_bins(w, spec.w_out)?, pool_bins(h, spec.h_out)?);
    let x = unpool_axis(dy.data(), spec.t_out * spec.w_out, h, d, &bh);
    let x = unpool_axis(&x, spec.t_out, w, h * d, &bw);
    let x = unpool_axis(&x, 1, t, w * h * d, &bt);
    Tensor::new(vec![t * w * h, d], x)
}

/// Fraction of temporal positions kept by pooling `t_in` frames to `t_out`.
pub fn downsample_rate(t_in: usize, t_out: usize) -> Result<f64> {
    if t_in == 0 || t_out > t_in {
        return dim_err(format!("cannot downsample {t_in} frames to {t_out}"));
    }
    Ok(t_out as f64 / t_in as f64)
}

/// Every grid token in t-major, then row-major spatial order: `[T*w*h x d]`.
pub fn n_frame_flatten(grid: &FeatureGrid) -> Tensor {
    grid.tokens()
}

/// vcg pooling: `w*h` per-site temporal means (row-major) followed
/// by `T` per-frame spatial means, `[(w*h + T) x d]`.
pub fn vcg_pool(grid: &FeatureGrid) -> Tensor {
    let (t, w, h, d) = grid.dims();
    let sites = w * h;
    let x = grid.tensor().data();
    let mut out = vec![0.0; (sites + t) * d];
    let (temporal, spatial) = out.split_at_mut(sites * d);
    for f in 0..t {
        for s in 0..sites {
            let tok = &x[(f * sites + s) * d..(f * sites + s + 1) * d];
            for k in 0..d {
                temporal[s * d + k] += tok[k];
                spatial[f * d + k] += tok[k];
            }
        }
    }
    temporal.iter_mut().for_each(|v| *v /= t as f64);
    spatial.iter_mut().for_each(|v| *v /= sites as f64);
    Tensor::new(vec![sites + t, d], out).expect("vcg token shape")
}

/// Gradient of [`vcg_pool`] w.r.t. the grid tokens.
pub fn vcg_pool_backward((t, w, h): (usize, usize, usize), dy: &Tensor) -> Result<Tensor> {
    let sites = w * h;
    let d = dy.cols();
    if dy.rows() != sites + t {
        return dim_err(format!(
            "vcg gradient has {} rows, expected {}",
            dy.rows(),
            sites + t
        ));
    }
    let mut dx = vec![0.0; t * sites * d];
    let (dtemp, dspat) = dy.data().split_at(sites * d);
    for f in 0..t {
        for s in 0..sites {
            for k in 0..d {
                dx[(f * sites + s) * d + k] =
                    dtemp[s * d + k] / t as f64 + dspat[f * d + k] / sites as f64;
            }
        }
    }
    Tensor::new(vec![t * sites, d], dx)
}

/// How the visual grid becomes the LM's visual token sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Pooling {
    /// Every token of every frame.
    NFrame,
    /// Temporal plus spatial means.
    Vcg,
    /// Adaptive average structure pooling to a target shape.
    Adaptive(PoolSpec),
}

impl Pooling {
    pub fn token_count(&self, (t, w, h): (usize, usize, usize)) -> usize {
        match self {
            Pooling::NFrame => t * w * h,
            Pooling::Vcg => w * h + t,
            Pooling::Adaptive(s) => s.token_count(),
        }
    }

    pub fn validate_for(&self, (t, w, h): (usize, usize, usize)) -> Result<()> {
        match self {
            Pooling::Adaptive(s) => s.validate_for(t, w, h),
            _ => Ok(()),
        }
    }

    /// Visual tokens `[N x d]` for the LM.
    pub fn apply(&self, grid: &FeatureGrid) -> Result<Tensor> {
        match self {
            Pooling::NFrame => Ok(n_frame_flatten(grid)),
            Pooling::Vcg => Ok(vcg_pool(grid)),
            Pooling::Adaptive(s) => Ok(adaptive_pool(grid, *s)?.tokens()),
        }
    }

    /// Gradient w.r.t. the grid tokens for output-token gradient `dy`.
    pub fn backward(&self, dims: (usize, usize, usize), dy: &Tensor) -> Result<Tensor> {
        match self {
            Pooling::NFrame => Ok(dy.clone()),
            Pooling::Vcg => vcg_pool_backward(dims, dy),
            Pooling::Adaptive(s) => adaptive_pool_backward(dims, *s, dy),
        }
    }

    /// Short label used in reports, e.g. `adaptive:16x2x2`.
    pub fn label(&self) -> String {
        match self {
            Pooling::NFrame => "n_frame".into(),
            Pooling::Vcg => "vcg".into(),
            Pooling::Adaptive(s) => format!("adaptive:{s}"),
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_frame" => return Ok(Pooling::NFrame),
            "vcg" => return Ok(Pooling::Vcg),
            _ => {}
        }
        let dims = s.strip_prefix("adaptive:").ok_or_else(|| {
            Error::Argument(format!("unknown pooling '{s}' (n_frame | vcg | adaptive:TxWxH)"))
        })?;
        let parts: Vec<usize> = dims
            .split('x')
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Argument(format!("bad pool shape '{dims}'")))?;
        match parts[..] {
            [t, w, h] => Ok(Pooling::Adaptive(PoolSpec::new(t, w, h))),
            _ => Err(Error::Argument(format!("bad pool shape '{dims}'"))),
        }
    }
}
