//! Token-norm dominance, spatial versus temporal neighbor similarity, and
//! generation-length statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::TokenSeq;
use crate::numerics::Tensor;
use crate::vision::FeatureGrid;

pub const DEFAULT_DOMINANCE_K: f64 = 5.0;
pub const DEFAULT_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[lo, hi]`; values on `hi` land in the last bin.
/// A degenerate range widens to `[lo, lo + 1]`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Lower median: the element at index `(n - 1) / 2` after sorting.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Norm statistics. The reference median is the lower median, so a single
/// outlier among two tokens is still measured against the other token.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormStats {
    pub norms: Vec<f64>,
    pub histogram: Histogram,
    /// Infinite (serialized as null) when the median is zero and the max not.
    pub max_over_median: f64,
    pub dominant_count: usize,
    /// Indices of tokens with norm above `k * median`.
    pub dominant: Vec<usize>,
}

/// Per-token Euclidean norms of `[N x d]` tokens with dominance at `k`.
pub fn token_norms(tokens: &Tensor, k: f64, bins: usize) -> Result<NormStats> {
    if tokens.rank() != 2 || tokens.rows() == 0 {
        return Err(Error::Argument("token_norms needs a nonempty [N x d] matrix".into()));
    }
    let norms: Vec<f64> = (0..tokens.rows())
        .map(|r| tokens.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let med = lower_median(&norms);
    let max_over_median = if max == med { 1.0 } else { max / med };
    let dominant: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] > k * med).collect();
    Ok(NormStats {
        histogram: histogram(&norms, 0.0, max, bins)?,
        max_over_median,
        dominant_count: dominant.len(),
        dominant,
        norms,
    })
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityStats {
    /// `None` when each frame holds a single token.
    pub mean_spatial: Option<f64>,
    /// `None` when the grid has a single frame.
    pub mean_temporal: Option<f64>,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

/// Cosine similarity of right/down neighbors within a frame and of the same
/// site in consecutive frames.
pub fn neighbor_similarity(grid: &FeatureGrid) -> SimilarityStats {
    let (t, w, h, _) = grid.dims();
    let mut spatial = Vec::with_capacity(t * (w * (h - 1) + (w - 1) * h));
    let mut temporal = Vec::with_capacity((t - 1) * w * h);
    for f in 0..t {
        for i in 0..w {
            for j in 0..h {
                let x = grid.token(f, i, j);
                if j + 1 < h {
                    spatial.push(cosine(x, grid.token(f, i, j + 1)));
                }
                if i + 1 < w {
                    spatial.push(cosine(x, grid.token(f, i + 1, j)));
                }
                if f + 1 < t {
                    temporal.push(cosine(x, grid.token(f + 1, i, j)));
                }
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    SimilarityStats { mean_spatial: mean(&spatial), mean_temporal: mean(&temporal), spatial, temporal }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthStats {
    pub lengths: Vec<usize>,
    pub histogram: Histogram,
    pub mean: f64,
    pub median: f64,
}

/// Token count before the first EOS of each generation.
pub fn text_length_stats(generations: &[TokenSeq], bins: usize) -> Result<LengthStats> {
    if generations.is_empty() {
        return Err(Error::Argument("no generations given".into()));
    }
    let lengths: Vec<usize> = generations.iter().map(|g| g.until_eos().len()).collect();
    let as_f: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let max = as_f.iter().cloned().fold(0.0, f64::max);
    Ok(LengthStats {
        histogram: histogram(&as_f, 0.0, max, bins)?,
        mean: as_f.iter().sum::<f64>() / as_f.len() as f64,
        median: median(&as_f),
        lengths,
    })
}

#[cfg(test)]
mod tests;
