//! Toy per-frame vision encoder and the multimodal projector that turn
//! sampled frames into a [`FeatureGrid`].

mod encoder;
mod grid;
mod patch;
mod projector;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encoder::{EncoderBlock, EncoderCache, VisionEncoder};
pub use grid::FeatureGrid;
pub use patch::patchify;
pub use projector::{ProjectorCache, Projector};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    /// Square frame side in pixels.
    pub frame_px: usize,
    pub patch_px: usize,
    pub d_vis: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub heads: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            frame_px: 16,
            patch_px: 4,
            d_vis: 32,
            d_model: 64,
            encoder_layers: 2,
            heads: 2,
        }
    }
}

impl VisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_px == 0 || !self.frame_px.is_multiple_of(self.patch_px) {
            return Err(Error::Config(format!(
                "frame_px {} not divisible by patch_px {}",
                self.frame_px, self.patch_px
            )));
        }
        if self.heads == 0 || !self.d_vis.is_multiple_of(self.heads) || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_vis {} and d_model {} must be divisible by heads {}",
                self.d_vis, self.d_model, self.heads
            )));
        }
        Ok(())
    }

    /// Patch grid side (`w = h`).
    pub fn grid_side(&self) -> usize {
        self.frame_px / self.patch_px
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_px * self.patch_px
    }
}
