//! Byte-level decoder LM whose projections are LoRA-adapted, plus the
//! visual+text sequence assembly and greedy decoding.

mod decoder;
mod generate;
mod lora;
mod sequence;
mod tokenizer;

pub use decoder::{Decoder, DecoderBlock, DecoderCache, KvCache, LmConfig};
pub use generate::{argmax, greedy_generate};
pub use lora::{is_lora_factor, LoraLinear};
pub use sequence::{build_input_sequence, InputSeq};
pub use tokenizer::{detokenize, tokenize, TokenSeq, BOS, EOS, PAD, VID, VOCAB};
