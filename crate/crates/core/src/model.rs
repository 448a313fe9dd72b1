//! The full pipeline: sample frames, encode, project, pool, then the LoRA
//! decoder. Also checkpoint I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::lm::{build_input_sequence, is_lora_factor, Decoder, LmConfig, TokenSeq};
use crate::numerics::{Rng, Tensor};
use crate::params::{join, Parameters};
use crate::pooling::{PoolSpec, Pooling};
use crate::trainer::cross_entropy_with_grad;
use crate::video::{load_tensors, save_tensors, uniform_sample_indices, TensorMap, Video};
use crate::vision::{FeatureGrid, Projector, VisionConfig, VisionEncoder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vision: VisionConfig,
    pub lm: LmConfig,
    /// Frames uniformly sampled from each input clip.
    pub frames: usize,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vision: VisionConfig::default(),
            lm: LmConfig::default(),
            frames: 16,
            pooling: Pooling::Adaptive(PoolSpec::new(16, 2, 2)),
        }
    }
}

impl ModelConfig {
    /// `(T, w, h)` of the grid entering the pooling stage.
    pub fn grid_dims(&self) -> (usize, usize, usize) {
        let s = self.vision.grid_side();
        (self.frames, s, s)
    }

    pub fn validate(&self) -> Result<()> {
        self.vision.validate()?;
        self.lm.validate()?;
        if self.vision.d_model != self.lm.d_model {
            return Err(Error::Config(format!(
                "projector width {} differs from LM width {}",
                self.vision.d_model, self.lm.d_model
            )));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        self.pooling
            .validate_for(self.grid_dims())
            .map_err(|e| Error::Config(format!("pooling {}: {e}", self.pooling.label())))
    }
}

/// Which parameter groups receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradOptions {
    /// Loss on answer tokens only; otherwise on every text token.
    pub loss_mask: bool,
    pub encoder: bool,
    pub lm_base: bool,
    pub embeddings: bool,
}

impl Default for GradOptions {
    fn default() -> Self {
        Self { loss_mask: true, encoder: true, lm_base: false, embeddings: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub encoder: VisionEncoder,
    pub projector: Projector,
    pub lm: Decoder,
}

/// Text positions whose next-token prediction is scored, with targets.
fn loss_targets(prompt: &TokenSeq, answer: &TokenSeq, text_start: usize, mask: bool) -> (Vec<usize>, Vec<u32>) {
    let first = if mask { prompt.len() } else { 0 };
    let full: Vec<u32> = prompt.ids.iter().chain(&answer.ids).copied().collect();
    (first..full.len()).map(|k| (text_start + k - 1, full[k])).unzip()
}

impl Model {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let encoder = VisionEncoder::init(&cfg.vision, &mut rng);
        let projector = Projector::init(cfg.vision.d_vis, cfg.vision.d_model, &mut rng);
        let lm = Decoder::init(&cfg.lm, &mut rng)?;
        Ok(Self { cfg: cfg.clone(), encoder, projector, lm })
    }

    /// Switch the pooling used for subsequent forward passes.
    pub fn set_pooling(&mut self, pooling: Pooling) -> Result<()> {
        pooling
            .validate_for(self.cfg.grid_dims())
            .map_err(|e| Error::Config(format!("pooling {}: {e}", pooling.label())))?;
        self.cfg.pooling = pooling;
        Ok(())
    }

    pub fn sample_frames(&self, video: &Video) -> Result<Video> {
        video.select(&uniform_sample_indices(video.frame_count(), self.cfg.frames))
    }

    /// Projected features `(T, w, h, d_model)` before pooling.
    pub fn feature_grid(&self, video: &Video) -> Result<FeatureGrid> {
        let grid = self.encoder.encode(&self.sample_frames(video)?)?;
        self.projector.project(&grid)
    }

    /// Visual tokens `[N x d_model]` as fed to the LM.
    pub fn visual_tokens(&self, video: &Video) -> Result<Tensor> {
        self.cfg.pooling.apply(&self.feature_grid(video)?)
    }

    /// The grid the LM sees. Sequence-style poolings are returned as a
    /// `(1, N, 1, d)` grid.
    pub fn pooled_grid(&self, video: &Video) -> Result<FeatureGrid> {
        let grid = self.feature_grid(video)?;
        match self.cfg.pooling {
            Pooling::NFrame => Ok(grid),
            Pooling::Adaptive(spec) => crate::pooling::adaptive_pool(&grid, spec),
            Pooling::Vcg => {
                let tokens = crate::pooling::vcg_pool(&grid);
                FeatureGrid::from_tokens(1, tokens.rows(), 1, tokens)
            }
        }
    }

    /// Mean next-token cross-entropy on one example.
    pub fn loss(&self, ex: &Example, loss_mask: bool) -> Result<f64> {
        let visual = self.visual_tokens(&ex.video)?;
        let text = ex.input_text();
        let seq = build_input_sequence(&visual, &text, &self.lm)?;
        let (pos, targets) = loss_targets(&ex.prompt, &ex.answer, 2 + visual.rows(), loss_mask);
        let (logits, _) = self.lm.forward_train(&seq.embeds, &pos)?;
        let mask = vec![true; pos.len()];
        Ok(cross_entropy_with_grad(&logits, &targets, &mask)?.0)
    }

    /// Loss on one example; gradients accumulate into `grad`.
    pub fn loss_and_grad(&self, ex: &Example, opts: &GradOptions, grad: &mut Model) -> Result<f64> {
        let frames = self.sample_frames(&ex.video)?;
        let (vis_grid, enc_cache) = self.encoder.encode_cached(&frames)?;
        let (t, w, h, _) = vis_grid.dims();
        let (proj, proj_cache) = self.projector.forward_cached(&vis_grid.tokens())?;
        let visual = self.cfg.pooling.apply(&FeatureGrid::from_tokens(t, w, h, proj)?)?;
        let seq = build_input_sequence(&visual, &ex.input_text(), &self.lm)?;
        let (pos, targets) = loss_targets(&ex.prompt, &ex.answer, seq.visual.end, opts.loss_mask);
        let (logits, cache) = self.lm.forward_train(&seq.embeds, &pos)?;
        let mask = vec![true; pos.len()];
        let (loss, dlogits) = cross_entropy_with_grad(&logits, &targets, &mask)?;
        let dx = self.lm.backward(&cache, &dlogits, &mut grad.lm, opts.lm_base)?;
        if opts.embeddings {
            for (p, id) in seq.ids.iter().enumerate() {
                if let Some(id) = id {
                    for (g, v) in grad.lm.tok_emb.row_mut(*id as usize).iter_mut().zip(dx.row(p)) {
                        *g += v;
                    }
                }
            }
        }
        let dvis = dx.slice_rows(seq.visual.start, seq.visual.end)?;
        let dproj = self.cfg.pooling.backward((t, w, h), &dvis)?;
        let dfeat = self.projector.backward(&proj_cache, &dproj, &mut grad.projector)?;
        if opts.encoder {
            self.encoder.backward(&enc_cache, &dfeat, &mut grad.encoder)?;
        }
        Ok(loss)
    }

    /// Every parameter plus `meta.config` (the JSON config as bytes) and
    /// `meta.alpha` (the current inference alpha).
    pub fn to_checkpoint(&self) -> Result<TensorMap> {
        let mut map = self.to_tensor_map();
        let json = serde_json::to_vec(&self.cfg)?;
        map.insert(
            META_CONFIG.into(),
            Tensor::vector(&json.iter().map(|&b| b as f64).collect::<Vec<_>>()),
        );
        map.insert(META_ALPHA.into(), Tensor::vector(&[self.alpha()]));
        Ok(map)
    }

    /// Inverse of [`Model::to_checkpoint`]. LoRA factors absent from the
    /// map (merged checkpoints) load as zeros.
    pub fn from_checkpoint(map: &TensorMap) -> Result<Self> {
        let cfg = read_config(map)?;
        let mut model = Model::init(&cfg, 0)?;
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, t) in model.named_params_mut() {
            match map.get(&name) {
                Some(src) if src.shape() == t.shape() => *t = src.clone(),
                Some(src) => {
                    return Err(Error::Config(format!(
                        "checkpoint '{name}' has shape {:?}, model expects {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                None if is_lora_factor(&name, &names) => t.data_mut().fill(0.0),
                None => return Err(Error::Config(format!("checkpoint is missing '{name}'"))),
            }
        }
        if let Some(a) = map.get(META_ALPHA) {
            let alpha = a.data()[0];
            for l in model.lm.lora_layers_mut() {
                l.alpha = alpha;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensors(path, &self.to_checkpoint()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&load_tensors(path)?)
    }

    /// Alpha shared by the LM's LoRA layers.
    pub fn alpha(&self) -> f64 {
        self.lm.head.alpha
    }
}

pub const META_CONFIG: &str = "meta.config";
pub const META_ALPHA: &str = "meta.alpha";

fn read_config(map: &TensorMap) -> Result<ModelConfig> {
    let t = map
        .get(META_CONFIG)
        .ok_or_else(|| Error::Config(format!("checkpoint has no '{META_CONFIG}' entry")))?;
    let bytes = t
        .data()
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && (0.0..256.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::Config(format!("'{META_CONFIG}' holds a non-byte value {v}")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(serde_json::from_slice(&bytes)?)
}

impl Parameters for Model {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.encoder.collect_params(&join(prefix, "vis"), out);
        self.projector.collect_params(&join(prefix, "proj"), out);
        self.lm.collect_params(&join(prefix, "lm"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.encoder.collect_params_mut(&join(prefix, "vis"), out);
        self.projector.collect_params_mut(&join(prefix, "proj"), out);
        self.lm.collect_params_mut(&join(prefix, "lm"), out);
    }
}
