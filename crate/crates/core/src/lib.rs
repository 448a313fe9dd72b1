//! Desk-scale laboratory for adapting an image-language model to video:
//! adaptive average structure pooling of per-frame visual features, a toy
//! vision encoder and LoRA-adapted decoder, post-training LoRA fusion, and
//! the diagnostics used to study dominant tokens and neighbor similarity.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod harness;
pub mod layers;
pub mod lm;
pub mod model;
pub mod numerics;
pub mod params;
pub mod pooling;
pub mod postopt;
pub mod trainer;
pub mod video;
pub mod vision;

pub use error::{Error, Result};
