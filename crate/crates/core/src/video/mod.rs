//! Frame sampling, the synthetic moving-square corpus, and the PLCK tensor
//! container.

mod plck;
mod sampling;
mod synth;

pub use plck::{decode_tensors, encode_tensors, load_tensors, save_tensors, TensorMap, PLCK_MAGIC, PLCK_VERSION};
pub use sampling::uniform_sample_indices;
pub use synth::{
    caption_for, gen_synth_sample, render_sample, Question, QuestionKind, SynthSample, Video,
    COLORS, COLOR_RGB, DIRECTIONS, SYNTH_FRAMES,
};
