use crate::error::{dim_err, Result};
use crate::layers::{attention_backward, attention_forward, concat_cols, split_cols, Linear, Norm};
use crate::numerics::{gelu, gelu_backward, LayerNormCache, Rng, Tensor};
use crate::params::{join, Parameters};
use crate::video::Video;
use crate::vision::{patchify, FeatureGrid, VisionConfig};

/// Pre-norm transformer block with bidirectional attention confined to
/// each frame's tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock {
    pub ln1: Norm,
    pub qkv: Linear,
    pub o: Linear,
    pub ln2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

struct BlockCache {
    ln1: LayerNormCache,
    a: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Vec<Tensor>>,
    att: Tensor,
    ln2: LayerNormCache,
    b: Tensor,
    u: Tensor,
    gu: Tensor,
}

impl EncoderBlock {
    fn init(d: usize, layers: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (d as f64).sqrt();
        let resid = std / (2.0 * layers as f64).sqrt();
        Self {
            ln1: Norm::new(d),
            qkv: Linear::init_no_bias(d, 3 * d, std, rng),
            o: Linear::init(d, d, resid, rng),
            ln2: Norm::new(d),
            fc1: Linear::init(d, 4 * d, std, rng),
            fc2: Linear::init(4 * d, d, resid / 2.0, rng),
        }
    }

    /// `x`: `[frames * per_frame x d]`
    fn forward(&self, x: &Tensor, per_frame: usize, heads: usize) -> Result<(Tensor, BlockCache)> {
        let d = x.cols();
        let (a, ln1) = self.ln1.forward(x)?;
        let qkv = self.qkv.forward(&a)?;
        let mut parts = split_cols(&qkv, &[d, d, d]).into_iter();
        let (q, k, v) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        let mut att = x.zeros_like();
        let span = per_frame * d;
        let probs = (0..x.rows() / per_frame)
            .map(|f| {
                let r = f * span..(f + 1) * span;
                attention_forward(
                    &q.data()[r.clone()],
                    &k.data()[r.clone()],
                    &v.data()[r.clone()],
                    per_frame,
                    d,
                    heads,
                    false,
                    &mut att.data_mut()[r],
                )
            })
            .collect();
        let mut h = self.o.forward(&att)?;
        h.add_assign(x)?;
        let (b, ln2) = self.ln2.forward(&h)?;
        let u = self.fc1.forward(&b)?;
        let gu = gelu(&u);
        let mut y = self.fc2.forward(&gu)?;
        y.add_assign(&h)?;
        Ok((y, BlockCache { ln1, a, q, k, v, probs, att, ln2, b, u, gu }))
    }

    fn backward(&self, c: &BlockCache, dy: &Tensor, per_frame: usize, g: &mut EncoderBlock) -> Result<Tensor> {
        let d = dy.cols();
        let dgu = self.fc2.backward(&c.gu, dy, &mut g.fc2)?;
        let du = gelu_backward(&c.u, &dgu);
        let db = self.fc1.backward(&c.b, &du, &mut g.fc1)?;
        let mut dh = self.ln2.backward(&c.ln2, &db, &mut g.ln2);
        dh.add_assign(dy)?;
        let datt = self.o.backward(&c.att, &dh, &mut g.o)?;
        let (mut dq, mut dk, mut dv) = (c.q.zeros_like(), c.k.zeros_like(), c.v.zeros_like());
        let span = per_frame * d;
        for (f, probs) in c.probs.iter().enumerate() {
            let r = f * span..(f + 1) * span;
            attention_backward(
                &c.q.data()[r.clone()],
                &c.k.data()[r.clone()],
                &c.v.data()[r.clone()],
                probs,
                &datt.data()[r.clone()],
                per_frame,
                d,
                &mut dq.data_mut()[r.clone()],
                &mut dk.data_mut()[r.clone()],
                &mut dv.data_mut()[r],
            );
        }
        let dqkv = concat_cols(&[&dq, &dk, &dv]);
        let da = self.qkv.backward(&c.a, &dqkv, &mut g.qkv)?;
        let mut dx = self.ln1.backward(&c.ln1, &da, &mut g.ln1);
        dx.add_assign(&dh)?;
        Ok(dx)
    }
}

impl Parameters for EncoderBlock {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.ln1.collect_params(&join(prefix, "ln1"), out);
        self.qkv.collect_params(&join(prefix, "attn.qkv"), out);
        self.o.collect_params(&join(prefix, "attn.o"), out);
        self.ln2.collect_params(&join(prefix, "ln2"), out);
        self.fc1.collect_params(&join(prefix, "mlp.fc1"), out);
        self.fc2.collect_params(&join(prefix, "mlp.fc2"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.ln1.collect_params_mut(&join(prefix, "ln1"), out);
        self.qkv.collect_params_mut(&join(prefix, "attn.qkv"), out);
        self.o.collect_params_mut(&join(prefix, "attn.o"), out);
        self.ln2.collect_params_mut(&join(prefix, "ln2"), out);
        self.fc1.collect_params_mut(&join(prefix, "mlp.fc1"), out);
        self.fc2.collect_params_mut(&join(prefix, "mlp.fc2"), out);
    }
}

/// Patch embedding, learned 2-D position table, pre-norm blocks and a final
/// norm, applied to every frame independently.
#[derive(Clone, Debug, PartialEq)]
pub struct VisionEncoder {
    pub heads: usize,
    pub patch_px: usize,
    pub embed: Linear,
    /// `[grid_side x grid_side x d_vis]`
    pub pos: Tensor,
    pub blocks: Vec<EncoderBlock>,
    pub ln_f: Norm,
}

pub struct EncoderCache {
    frames: usize,
    patches: Tensor,
    blocks: Vec<BlockCache>,
    ln_f: LayerNormCache,
}

impl VisionEncoder {
    pub fn init(cfg: &VisionConfig, rng: &mut Rng) -> Self {
        let side = cfg.grid_side();
        let d = cfg.d_vis;
        Self {
            heads: cfg.heads,
            patch_px: cfg.patch_px,
            embed: Linear::init(cfg.patch_dim(), d, 1.0 / (cfg.patch_dim() as f64).sqrt(), rng),
            pos: Tensor::randn(&[side, side, d], 0.5, rng),
            blocks: (0..cfg.encoder_layers)
                .map(|_| EncoderBlock::init(d, cfg.encoder_layers, rng))
                .collect(),
            ln_f: Norm::new(d),
        }
    }

    pub fn d_vis(&self) -> usize {
        self.embed.out_dim()
    }

    fn side(&self) -> usize {
        self.pos.shape()[0]
    }

    pub fn encode(&self, video: &Video) -> Result<FeatureGrid> {
        Ok(self.encode_cached(video)?.0)
    }

    pub fn encode_cached(&self, video: &Video) -> Result<(FeatureGrid, EncoderCache)> {
        let side = self.side();
        let per_frame = side * side;
        let (h, w) = video.frame_size();
        if h != side * self.patch_px || w != side * self.patch_px {
            return dim_err(format!(
                "encoder expects {0}x{0} px frames, got {h}x{w}",
                side * self.patch_px
            ));
        }
        let t = video.frame_count();
        let mut rows = Vec::with_capacity(t * per_frame * self.embed.in_dim());
        for f in 0..t {
            rows.extend(patchify(&video.frame(f), self.patch_px)?.into_data());
        }
        let patches = Tensor::new(vec![t * per_frame, self.embed.in_dim()], rows)?;
        let mut x = self.embed.forward(&patches)?;
        let d = x.cols();
        for chunk in x.data_mut().chunks_exact_mut(per_frame * d) {
            for (a, p) in chunk.iter_mut().zip(self.pos.data()) {
                *a += p;
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x, per_frame, self.heads)?;
            caches.push(c);
            x = y;
        }
        let (y, ln_f) = self.ln_f.forward(&x)?;
        let grid = FeatureGrid::from_tokens(t, side, side, y)?;
        Ok((
            grid,
            EncoderCache {
                frames: t,
                patches,
                blocks: caches,
                ln_f,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream `dgrid` (tokens matrix).
    pub fn backward(&self, cache: &EncoderCache, dtokens: &Tensor, grad: &mut VisionEncoder) -> Result<()> {
        let per_frame = self.side() * self.side();
        let mut dx = self.ln_f.backward(&cache.ln_f, dtokens, &mut grad.ln_f);
        for ((block, c), g) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grad.blocks.iter_mut())
            .rev()
        {
            dx = block.backward(c, &dx, per_frame, g)?;
        }
        let d = dx.cols();
        for chunk in dx.data().chunks_exact(per_frame * d).take(cache.frames) {
            for (gp, v) in grad.pos.data_mut().iter_mut().zip(chunk) {
                *gp += v;
            }
        }
        self.embed.backward(&cache.patches, &dx, &mut grad.embed)?;
        Ok(())
    }
}

impl Parameters for VisionEncoder {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.embed.collect_params(&join(prefix, "embed"), out);
        out.push((join(prefix, "pos"), &self.pos));
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect_params(&join(prefix, &format!("L{i}")), out);
        }
        self.ln_f.collect_params(&join(prefix, "ln_f"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.embed.collect_params_mut(&join(prefix, "embed"), out);
        out.push((join(prefix, "pos"), &mut self.pos));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_params_mut(&join(prefix, &format!("L{i}")), out);
        }
        self.ln_f.collect_params_mut(&join(prefix, "ln_f"), out);
    }
}
