//! Instruction tuning on synthetic clips: masked next-token cross-entropy,
//! AdamW, cosine schedule with linear warmup, periodic checkpoints.

mod loss;
mod optim;
mod schedule;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use loss::{cross_entropy, cross_entropy_with_grad};
pub use optim::AdamW;
pub use schedule::{cosine_with_warmup, warmup_steps};

use crate::data::{Example, Task, Template};
use crate::error::{Error, Result};
use crate::lm::is_lora_factor;
use crate::model::{GradOptions, Model, ModelConfig};
use crate::numerics::{Rng, Tensor};
use crate::pooling::{PoolSpec, Pooling};
use crate::params::Parameters;
use crate::video::gen_synth_sample;

/// Where training clips come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A fixed set of clips, each used with every task, reshuffled per epoch.
    Fixed { samples: usize },
    /// A fresh clip and a random task for every example.
    Stream,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_ratio: f64,
    pub seed: u64,
    /// Score answer tokens only.
    pub loss_mask: bool,
    pub weight_decay: f64,
    pub train_encoder: bool,
    /// Also update the LM's frozen base weights and norms.
    pub train_lm_base: bool,
    pub train_embeddings: bool,
    pub train_lora: bool,
    /// Checkpoint every this many steps; 0 only at the end.
    pub checkpoint_every: usize,
    /// Optional image stage run by [`train_pipeline`] before video tuning.
    pub image_pretrain: Option<ImagePretrain>,
    pub data: DataSource,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            peak_lr: 2e-4,
            total_steps: 2000,
            warmup_ratio: 0.03,
            seed: 42,
            loss_mask: true,
            weight_decay: 0.0,
            train_encoder: true,
            train_lm_base: false,
            train_embeddings: false,
            train_lora: true,
            checkpoint_every: 0,
            image_pretrain: None,
            data: DataSource::Stream,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.total_steps == 0 || self.batch_size == 0 {
            return bad("total_steps and batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must lie in [0, 1), got {}", self.warmup_ratio));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return bad("peak_lr must be > 0 and weight_decay >= 0".into());
        }
        if let Some(p) = &self.image_pretrain {
            if p.steps == 0 || !(p.peak_lr > 0.0 && p.peak_lr.is_finite()) {
                return bad("image_pretrain needs steps >= 1 and peak_lr > 0".into());
            }
        }
        if let DataSource::Fixed { samples: 0 } = self.data {
            return bad("fixed dataset needs at least one sample".into());
        }
        self.model.validate()
    }

    pub fn grad_options(&self) -> GradOptions {
        GradOptions {
            loss_mask: self.loss_mask,
            encoder: self.train_encoder,
            lm_base: self.train_lm_base,
            embeddings: self.train_embeddings,
        }
    }

    /// Whether the optimizer updates the parameter called `name`.
    pub fn is_trainable(&self, name: &str, all: &[String]) -> bool {
        if name.starts_with("vis.") {
            self.train_encoder
        } else if name.starts_with("proj.") {
            true
        } else if name == "lm.tok_emb" {
            self.train_embeddings
        } else if is_lora_factor(name, all) {
            self.train_lora
        } else {
            self.train_lm_base
        }
    }
}

/// Learning rate for `step` under `cfg`'s schedule.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> Result<f64> {
    cosine_with_warmup(step, cfg.peak_lr, cfg.total_steps, cfg.warmup_ratio)
}

const DATA_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic example stream for a config.
pub struct Batcher {
    rng: Rng,
    tasks: Vec<Task>,
    grid_px: usize,
    fixed: Vec<Example>,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self::with_tasks(cfg, &Task::ALL)
    }

    pub fn with_tasks(cfg: &TrainConfig, tasks: &[Task]) -> Self {
        assert!(!tasks.is_empty());
        let mut rng = Rng::new(cfg.seed ^ DATA_STREAM);
        let grid_px = cfg.model.vision.frame_px;
        let fixed = match cfg.data {
            DataSource::Fixed { samples } => (0..samples)
                .map(|_| gen_synth_sample(&mut rng, grid_px))
                .flat_map(|s| tasks.iter().map(move |&t| Example::new(&s, t, Template::Ind)).collect::<Vec<_>>())
                .collect(),
            DataSource::Stream => Vec::new(),
        };
        Self { rng, tasks: tasks.to_vec(), grid_px, order: Vec::new(), cursor: 0, fixed }
    }

    pub fn next_batch(&mut self, n: usize) -> Vec<Example> {
        (0..n).map(|_| self.next_example()).collect()
    }

    fn next_example(&mut self) -> Example {
        if self.fixed.is_empty() {
            let s = gen_synth_sample(&mut self.rng, self.grid_px);
            let task = self.tasks[self.rng.below(self.tasks.len())];
            return Example::new(&s, task, Template::Ind);
        }
        if self.cursor == self.order.len() {
            self.order = (0..self.fixed.len()).collect();
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.fixed[self.order[self.cursor - 1]].clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    /// Mean batch loss before this step's update.
    pub loss: f64,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.step, r.lr, r.loss);
    }
    s
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRow>,
}

/// Run `cfg.total_steps` optimizer steps on `model`. `on_checkpoint` sees the
/// model after every `checkpoint_every` steps and at the end.
pub fn train(
    cfg: &TrainConfig,
    model: Model,
    on_checkpoint: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    train_with(cfg, model, Batcher::new(cfg), on_checkpoint)
}

fn train_with(
    cfg: &TrainConfig,
    mut model: Model,
    mut batcher: Batcher,
    mut on_checkpoint: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.cfg != cfg.model {
        return Err(Error::Config("model does not match the training config".into()));
    }
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let trainable: Vec<bool> = names.iter().map(|n| cfg.is_trainable(n, &names)).collect();
    let mut opt = {
        let params = model.named_params();
        let sel: Vec<&Tensor> = select(params.into_iter().map(|(_, t)| t), &trainable);
        AdamW::new(&sel, cfg.weight_decay)
    };
    let opts = cfg.grad_options();
    let mut log = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let lr = lr_at(step, cfg)?;
        let batch = batcher.next_batch(cfg.batch_size);
        let results = batch
            .par_iter()
            .map(|ex| {
                let mut g = model.zeroed();
                let loss = model.loss_and_grad(ex, &opts, &mut g)?;
                Ok((loss, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grad = model.zeroed();
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            grad.accumulate(g);
        }
        let inv = 1.0 / cfg.batch_size as f64;
        loss *= inv;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss} at step {step}")));
        }
        grad.scale_all(inv);
        let gp = grad.named_params();
        let grads = select(gp.into_iter().map(|(_, t)| t), &trainable);
        let mut params = select(model.named_params_mut().into_iter().map(|(_, t)| t), &trainable);
        opt.step(&mut params, &grads, lr);
        log.push(LogRow { step, lr, loss });
        let done = step + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.total_steps {
            on_checkpoint(done, &model)?;
        }
    }
    on_checkpoint(cfg.total_steps, &model)?;
    Ok(TrainOutcome { model, log })
}

/// Image-stage settings: single sampled frames, the color question only,
/// base LM weights trainable and adapters switched off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagePretrain {
    pub steps: usize,
    pub peak_lr: f64,
}

impl Default for ImagePretrain {
    fn default() -> Self {
        Self { steps: 1500, peak_lr: 1e-3 }
    }
}

/// Single-frame counterpart of a video pooling.
pub fn image_pooling(p: Pooling) -> Pooling {
    match p {
        Pooling::Adaptive(s) => Pooling::Adaptive(PoolSpec::new(1, s.w_out, s.h_out)),
        other => other,
    }
}

/// The training config of the image stage for `cfg`.
pub fn image_stage_config(cfg: &TrainConfig, p: &ImagePretrain) -> TrainConfig {
    let mut c = cfg.clone();
    c.image_pretrain = None;
    c.total_steps = p.steps;
    c.peak_lr = p.peak_lr;
    c.seed = cfg.seed ^ IMAGE_STREAM;
    c.train_encoder = true;
    c.train_lm_base = true;
    c.train_embeddings = true;
    c.train_lora = false;
    c.checkpoint_every = 0;
    c.model.frames = 1;
    c.model.pooling = image_pooling(cfg.model.pooling);
    c
}

const IMAGE_STREAM: u64 = 0x6a09_e667_f3bc_c908;

pub struct PipelineOutcome {
    pub model: Model,
    /// Image-stage log, when that stage ran.
    pub image_log: Vec<LogRow>,
    pub log: Vec<LogRow>,
}

/// Initialise from `cfg.seed`, run the image stage if configured, then video
/// tuning. Checkpoints are reported for the video stage only.
pub fn train_pipeline(cfg: &TrainConfig, on_checkpoint: impl FnMut(usize, &Model) -> Result<()>) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut model = Model::init(&cfg.model, cfg.seed)?;
    let mut image_log = Vec::new();
    if let Some(p) = &cfg.image_pretrain {
        let icfg = image_stage_config(cfg, p);
        let mut img = model.clone();
        img.cfg = icfg.model.clone();
        for l in img.lm.lora_layers_mut() {
            l.alpha = 0.0;
        }
        let batcher = Batcher::with_tasks(&icfg, &[Task::Color]);
        let out = train_with(&icfg, img, batcher, |_, _| Ok(()))?;
        image_log = out.log;
        model = out.model;
        model.cfg = cfg.model.clone();
        for l in model.lm.lora_layers_mut() {
            l.alpha = cfg.model.lm.train_alpha;
        }
    }
    let out = train(cfg, model, on_checkpoint)?;
    Ok(PipelineOutcome { model: out.model, image_log, log: out.log })
}

fn select<T>(items: impl Iterator<Item = T>, keep: &[bool]) -> Vec<T> {
    items.zip(keep).filter(|(_, &k)| k).map(|(t, _)| t).collect()
}
