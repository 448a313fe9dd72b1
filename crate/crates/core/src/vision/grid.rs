use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

/// Per-frame visual token embeddings laid out `[T x w x h x d]`.
///
/// Axis `w` indexes patch rows and `h` patch columns, so token `(t, i, j)`
/// sits at flat row `(t * w + i) * h + j` of [`FeatureGrid::tokens`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    data: Tensor,
}

impl FeatureGrid {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 4 {
            return dim_err(format!(
                "feature grid must be rank 4 (T, w, h, d), got {:?}",
                data.shape()
            ));
        }
        Ok(Self { data })
    }

    /// Rebuild a grid from `[T*w*h x d]` tokens in t-major order.
    pub fn from_tokens(t: usize, w: usize, h: usize, tokens: Tensor) -> Result<Self> {
        let d = tokens.cols();
        if tokens.rows() != t * w * h {
            return dim_err(format!(
                "{} tokens cannot form a {t}x{w}x{h} grid",
                tokens.rows()
            ));
        }
        Self::new(tokens.reshape(&[t, w, h, d])?)
    }

    /// `(T, w, h, d)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn token_count(&self) -> usize {
        let (t, w, h, _) = self.dims();
        t * w * h
    }

    /// All tokens as a `[T*w*h x d]` matrix.
    pub fn tokens(&self) -> Tensor {
        let (_, _, _, d) = self.dims();
        self.data
            .clone()
            .reshape(&[self.token_count(), d])
            .expect("grid token view")
    }

    pub fn token(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let (_, w, h, _) = self.dims();
        self.data.row((t * w + i) * h + j)
    }
}
