#![allow(dead_code)]

use pllab_core::lm::LmConfig;
use pllab_core::model::{Model, ModelConfig};
use pllab_core::numerics::{Rng, Tensor};
use pllab_core::pooling::{PoolSpec, Pooling};
use pllab_core::vision::VisionConfig;

/// 8 px frames, 2x2 token grid, 4 frames, width 8.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        vision: VisionConfig { frame_px: 8, patch_px: 4, d_vis: 8, d_model: 8, encoder_layers: 1, heads: 2 },
        lm: LmConfig { d_model: 8, layers: 2, heads: 2, max_seq: 128, lora_rank: 2, train_alpha: 4.0, ..LmConfig::default() },
        frames: 4,
        pooling: Pooling::Adaptive(PoolSpec::new(3, 2, 1)),
    }
}

/// A model whose LoRA factors are all nonzero.
pub fn perturbed(cfg: &ModelConfig, seed: u64) -> Model {
    let mut m = Model::init(cfg, seed).unwrap();
    let mut rng = Rng::new(seed ^ 0xabc);
    for l in m.lm.lora_layers_mut() {
        l.b = Tensor::randn(l.b.shape(), 0.3, &mut rng);
    }
    m
}
