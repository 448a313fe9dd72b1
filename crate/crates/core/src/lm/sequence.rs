use std::ops::Range;

use crate::error::{dim_err, Result};
use crate::lm::{Decoder, TokenSeq, BOS, VID};
use crate::numerics::Tensor;

/// Embedded LM input `[BOS, VID, visual..., text...]`.
#[derive(Clone, Debug)]
pub struct InputSeq {
    pub embeds: Tensor,
    /// Token id per position; `None` for visual tokens.
    pub ids: Vec<Option<u32>>,
    pub visual: Range<usize>,
}

impl InputSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Lay out `[BOS, VID, visual tokens, text tokens]`; position ids run
/// consecutively over the whole sequence.
pub fn build_input_sequence(visual: &Tensor, text: &TokenSeq, lm: &Decoder) -> Result<InputSeq> {
    let d = lm.d_model();
    if visual.rank() != 2 || visual.cols() != d {
        return dim_err(format!(
            "visual tokens must be [n x {d}], got {:?}",
            visual.shape()
        ));
    }
    let n_vis = visual.rows();
    let len = 2 + n_vis + text.len();
    if len > lm.max_seq() {
        return Err(crate::Error::Capacity { len, max: lm.max_seq() });
    }
    let mut data = Vec::with_capacity(len * d);
    let mut ids = Vec::with_capacity(len);
    for row in lm.embed_tokens(&[BOS, VID])? {
        data.extend_from_slice(row);
    }
    ids.extend([Some(BOS), Some(VID)]);
    data.extend_from_slice(visual.data());
    ids.extend(std::iter::repeat_n(None, n_vis));
    for row in lm.embed_tokens(&text.ids)? {
        data.extend_from_slice(row);
    }
    ids.extend(text.ids.iter().map(|&t| Some(t)));
    Ok(InputSeq {
        embeds: Tensor::new(vec![len, d], data)?,
        ids,
        visual: 2..2 + n_vis,
    })
}
