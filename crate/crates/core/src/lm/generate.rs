use crate::error::Result;
use crate::lm::{build_input_sequence, Decoder, TokenSeq, EOS};
use crate::numerics::Tensor;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding after `[BOS, VID, visual, prompt]`. Stops at EOS (not
/// included), after `max_new` tokens, or when the context is full.
pub fn greedy_generate(lm: &Decoder, visual: &Tensor, prompt: &TokenSeq, max_new: usize) -> Result<TokenSeq> {
    let seq = build_input_sequence(visual, prompt, lm)?;
    let mut cache = lm.new_cache();
    let h = lm.extend(&mut cache, &seq.embeds)?;
    let last = h.slice_rows(h.rows() - 1, h.rows())?;
    let mut logits = lm.logits(&last)?;
    let mut out = Vec::new();
    while out.len() < max_new {
        let next = argmax(logits.data()) as u32;
        if next == EOS {
            break;
        }
        out.push(next);
        if out.len() == max_new || cache.len() >= lm.max_seq() {
            break;
        }
        let emb = Tensor::from_rows(&lm.embed_tokens(&[next])?)?;
        let h = lm.extend(&mut cache, &emb)?;
        logits = lm.logits(&h)?;
    }
    Ok(TokenSeq::new(out))
}
