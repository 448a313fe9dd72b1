//! Multiple-choice accuracy and generation length on synthetic clips.

use rayon::prelude::*;

use crate::data::{reply_tokens, Task, Template};
use crate::error::{Error, Result};
use crate::lm::{build_input_sequence, greedy_generate, tokenize, TokenSeq};
use crate::model::Model;
use crate::numerics::Tensor;
use crate::video::{QuestionKind, SynthSample};

/// Longest reply generated during evaluation.
pub const GEN_MAX_NEW: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub spatial_acc: f64,
    pub temporal_acc: f64,
    pub mean_gen_len: f64,
}

/// Log-likelihood of each reply (its bytes and EOS) after the prompt.
pub fn choice_log_likelihoods(model: &Model, visual: &Tensor, prompt: &TokenSeq, choices: &[String]) -> Result<Vec<f64>> {
    let lm = &model.lm;
    let seq = build_input_sequence(visual, prompt, lm)?;
    let mut base = lm.new_cache();
    let h = lm.extend(&mut base, &seq.embeds)?;
    let last = lm.logits(&h.slice_rows(h.rows() - 1, h.rows())?)?;
    choices
        .iter()
        .map(|c| {
            let reply = reply_tokens(c);
            let mut cache = base.clone();
            let mut rows = vec![last.row(0).to_vec()];
            let n = reply.len() - 1;
            if n > 0 {
                let emb = Tensor::from_rows(&lm.embed_tokens(&reply.ids[..n])?)?;
                let lg = lm.logits(&lm.extend(&mut cache, &emb)?)?;
                rows.extend((0..n).map(|r| lg.row(r).to_vec()));
            }
            Ok(rows.iter().zip(&reply.ids).map(|(row, &t)| log_softmax_at(row, t as usize)).sum())
        })
        .collect()
}

fn log_softmax_at(row: &[f64], idx: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
    row[idx] - m - z.ln()
}

/// Index of the most likely choice; ties go to the lowest index.
pub fn predict_choice(model: &Model, visual: &Tensor, prompt: &TokenSeq, choices: &[String]) -> Result<usize> {
    let ll = choice_log_likelihoods(model, visual, prompt, choices)?;
    Ok(crate::lm::argmax(&ll))
}

struct SampleScore {
    spatial: bool,
    temporal: bool,
    gen_len: usize,
}

fn score_sample(model: &Model, s: &SynthSample, template: Template) -> Result<SampleScore> {
    let visual = model.visual_tokens(&s.video)?;
    let correct = |kind: QuestionKind| -> Result<bool> {
        let q = s.question(kind);
        let prompt = tokenize(&template.prompt(&q.text));
        Ok(predict_choice(model, &visual, &prompt, &q.choices)? == q.answer)
    };
    let describe = tokenize(&template.prompt(Task::Describe.question(s)));
    let gen = greedy_generate(&model.lm, &visual, &describe, GEN_MAX_NEW)?;
    Ok(SampleScore {
        spatial: correct(QuestionKind::Spatial)?,
        temporal: correct(QuestionKind::Temporal)?,
        gen_len: gen.len(),
    })
}

/// Accuracy on both question kinds and mean greedy reply length to the
/// describe prompt.
pub fn evaluate(model: &Model, samples: &[SynthSample], template: Template) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let scores = samples
        .par_iter()
        .map(|s| score_sample(model, s, template))
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let count = |f: fn(&SampleScore) -> bool| scores.iter().filter(|s| f(s)).count() as f64 / n;
    Ok(EvalMetrics {
        spatial_acc: count(|s| s.spatial),
        temporal_acc: count(|s| s.temporal),
        mean_gen_len: scores.iter().map(|s| s.gen_len as f64).sum::<f64>() / n,
    })
}

/// Greedy replies to the describe prompt, one per sample.
pub fn describe_all(model: &Model, samples: &[SynthSample], template: Template) -> Result<Vec<TokenSeq>> {
    samples
        .par_iter()
        .map(|s| {
            let visual = model.visual_tokens(&s.video)?;
            let prompt = tokenize(&template.prompt(Task::Describe.question(s)));
            greedy_generate(&model.lm, &visual, &prompt, GEN_MAX_NEW)
        })
        .collect()
}
