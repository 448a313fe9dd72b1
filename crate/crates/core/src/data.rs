//! Conversation templates, training examples, and balanced evaluation sets.

use crate::error::{Error, Result};
use crate::lm::{tokenize, TokenSeq, EOS};
use crate::numerics::{Rng, Tensor};
use crate::video::{render_sample, QuestionKind, SynthSample, TensorMap, Video, COLORS, DIRECTIONS};

pub const DESCRIBE_PROMPT: &str = "Describe the video.";

/// Conversation format. `Ood` swaps the user role tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Template {
    Ind,
    Ood,
}

impl Template {
    pub const ALL: [Template; 2] = [Template::Ind, Template::Ood];

    pub fn role(&self) -> &'static str {
        match self {
            Template::Ind => "USER",
            Template::Ood => "Human",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Template::Ind => "IND",
            Template::Ood => "OOD",
        }
    }

    pub fn prompt(&self, question: &str) -> String {
        format!("{}: {question} ASSISTANT:", self.role())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Color,
    Direction,
    Describe,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Color, Task::Direction, Task::Describe];

    pub fn question<'a>(&self, sample: &'a SynthSample) -> &'a str {
        match self {
            Task::Color => &sample.question(QuestionKind::Spatial).text,
            Task::Direction => &sample.question(QuestionKind::Temporal).text,
            Task::Describe => DESCRIBE_PROMPT,
        }
    }

    pub fn answer<'a>(&self, sample: &'a SynthSample) -> &'a str {
        match self {
            Task::Color => sample.question(QuestionKind::Spatial).answer_text(),
            Task::Direction => sample.question(QuestionKind::Temporal).answer_text(),
            Task::Describe => &sample.caption,
        }
    }
}

/// Assistant reply tokens: a leading space, the text, then EOS.
pub fn reply_tokens(text: &str) -> TokenSeq {
    let mut ids = tokenize(&format!(" {text}")).ids;
    ids.push(EOS);
    TokenSeq::new(ids)
}

/// One supervised turn. `answer` ends with EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub video: Video,
    pub prompt: TokenSeq,
    pub answer: TokenSeq,
}

impl Example {
    pub fn new(sample: &SynthSample, task: Task, template: Template) -> Self {
        Self {
            video: sample.video.clone(),
            prompt: tokenize(&template.prompt(task.question(sample))),
            answer: reply_tokens(task.answer(sample)),
        }
    }

    /// Text fed to the LM: the prompt and every answer token but the last,
    /// which is only ever a target.
    pub fn input_text(&self) -> TokenSeq {
        let n = self.answer.len().saturating_sub(1);
        TokenSeq::new(self.prompt.ids.iter().chain(&self.answer.ids[..n]).copied().collect())
    }
}

/// `per_combo` clips for each of the 16 (color, direction) pairs, so chance
/// accuracy is exactly 25% on both question kinds.
pub fn balanced_eval_set(seed: u64, per_combo: usize, grid_px: usize) -> Vec<SynthSample> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(per_combo * COLORS.len() * DIRECTIONS.len());
    for _ in 0..per_combo {
        for c in 0..COLORS.len() {
            for d in 0..DIRECTIONS.len() {
                out.push(render_sample(&mut rng, grid_px, c, d));
            }
        }
    }
    out
}

/// Entries `sample.NNNNN.video` and `sample.NNNNN.label` (`[color, direction]`).
pub fn samples_to_tensors(samples: &[SynthSample]) -> TensorMap {
    let mut map = TensorMap::new();
    for (i, s) in samples.iter().enumerate() {
        map.insert(format!("sample.{i:05}.video"), s.video.frames().clone());
        map.insert(
            format!("sample.{i:05}.label"),
            Tensor::vector(&[s.color as f64, s.direction as f64]),
        );
    }
    map
}

pub fn samples_from_tensors(map: &TensorMap) -> Result<Vec<SynthSample>> {
    let mut out = Vec::new();
    loop {
        let i = out.len();
        let (Some(video), Some(label)) = (
            map.get(&format!("sample.{i:05}.video")),
            map.get(&format!("sample.{i:05}.label")),
        ) else {
            break;
        };
        let ids = label.data();
        let id = |v: f64| -> Result<usize> {
            if v.fract() == 0.0 && v >= 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("sample {i}: bad label value {v}")))
            }
        };
        if ids.len() != 2 {
            return Err(Error::Config(format!("sample {i}: label must hold 2 values")));
        }
        out.push(SynthSample::from_attributes(Video::new(video.clone())?, id(ids[0])?, id(ids[1])?)?);
    }
    if out.len() * 2 != map.len() {
        return Err(Error::Config(
            "sample entries must be numbered consecutively from 00000".into(),
        ));
    }
    Ok(out)
}
