use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::layers::{apply_rope, attention_backward, attention_forward, Norm};
use crate::lm::{LoraLinear, VOCAB};
use crate::numerics::{gelu, gelu_backward, gemm_strided, softmax_in_place, LayerNormCache, Rng, Tensor};
use crate::params::{join, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub vocab: usize,
    pub max_seq: usize,
    pub lora_rank: usize,
    pub train_alpha: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            heads: 4,
            vocab: VOCAB,
            max_seq: 512,
            lora_rank: 4,
            train_alpha: 32.0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab != VOCAB {
            return bad(format!("vocab must be {VOCAB} (256 bytes + 4 specials), got {}", self.vocab));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) || !(self.d_model / self.heads).is_multiple_of(2) {
            return bad(format!(
                "d_model {} must split into {} heads of even width",
                self.d_model, self.heads
            ));
        }
        if self.lora_rank == 0 || self.lora_rank > self.d_model {
            return bad(format!("lora_rank {} must lie in 1..={}", self.lora_rank, self.d_model));
        }
        if !(self.train_alpha >= 0.0) {
            return bad(format!("train_alpha must be >= 0, got {}", self.train_alpha));
        }
        if self.layers == 0 || self.max_seq == 0 {
            return bad("layers and max_seq must be >= 1".into());
        }
        Ok(())
    }
}

/// Pre-norm causal block; every projection is LoRA-adapted.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderBlock {
    pub ln1: Norm,
    pub q: LoraLinear,
    pub k: LoraLinear,
    pub v: LoraLinear,
    pub o: LoraLinear,
    pub ln2: Norm,
    pub fc1: LoraLinear,
    pub fc2: LoraLinear,
}

struct BlockCache {
    ln1: LayerNormCache,
    a: Tensor,
    qu: Tensor,
    ku: Tensor,
    vu: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    att: Tensor,
    ou: Tensor,
    ln2: LayerNormCache,
    b: Tensor,
    fc1u: Tensor,
    u: Tensor,
    gu: Tensor,
    fc2u: Tensor,
}

impl DecoderBlock {
    fn init(cfg: &LmConfig, rng: &mut Rng) -> Self {
        let d = cfg.d_model;
        let (r, alpha) = (cfg.lora_rank, cfg.train_alpha);
        let std = 1.0 / (d as f64).sqrt();
        let resid = std / (2.0 * cfg.layers as f64).sqrt();
        Self {
            ln1: Norm::new(d),
            q: LoraLinear::init(d, d, r, alpha, std, rng),
            k: LoraLinear::init(d, d, r, alpha, std, rng),
            v: LoraLinear::init(d, d, r, alpha, std, rng),
            o: LoraLinear::init(d, d, r, alpha, resid, rng),
            ln2: Norm::new(d),
            fc1: LoraLinear::init(d, 4 * d, r, alpha, std, rng),
            fc2: LoraLinear::init(4 * d, d, r, alpha, resid / 2.0, rng),
        }
    }

    fn loras_mut(&mut self) -> [&mut LoraLinear; 6] {
        [&mut self.q, &mut self.k, &mut self.v, &mut self.o, &mut self.fc1, &mut self.fc2]
    }

    fn loras(&self) -> [&LoraLinear; 6] {
        [&self.q, &self.k, &self.v, &self.o, &self.fc1, &self.fc2]
    }

    fn forward(&self, x: &Tensor, heads: usize) -> Result<(Tensor, BlockCache)> {
        let (len, d) = (x.rows(), x.cols());
        let (a, ln1) = self.ln1.forward(x)?;
        let (mut q, qu) = self.q.forward_cached(&a)?;
        let (mut k, ku) = self.k.forward_cached(&a)?;
        let (v, vu) = self.v.forward_cached(&a)?;
        apply_rope(q.data_mut(), d, heads, 0, false);
        apply_rope(k.data_mut(), d, heads, 0, false);
        let mut att = x.zeros_like();
        let probs = attention_forward(q.data(), k.data(), v.data(), len, d, heads, true, att.data_mut());
        let (o, ou) = self.o.forward_cached(&att)?;
        let h = x.add(&o)?;
        let (b, ln2) = self.ln2.forward(&h)?;
        let (u, fc1u) = self.fc1.forward_cached(&b)?;
        let gu = gelu(&u);
        let (m, fc2u) = self.fc2.forward_cached(&gu)?;
        let y = h.add(&m)?;
        Ok((
            y,
            BlockCache { ln1, a, qu, ku, vu, q, k, v, probs, att, ou, ln2, b, fc1u, u, gu, fc2u },
        ))
    }

    fn backward(&self, c: &BlockCache, dy: &Tensor, heads: usize, g: &mut DecoderBlock, base: bool) -> Result<Tensor> {
        let (len, d) = (dy.rows(), dy.cols());
        let dgu = self.fc2.backward(&c.gu, &c.fc2u, dy, &mut g.fc2, base)?;
        let du = gelu_backward(&c.u, &dgu);
        let db = self.fc1.backward(&c.b, &c.fc1u, &du, &mut g.fc1, base)?;
        let mut dh = self.ln2.backward(&c.ln2, &db, &mut g.ln2);
        dh.add_assign(dy)?;
        let datt = self.o.backward(&c.att, &c.ou, &dh, &mut g.o, base)?;
        let (mut dq, mut dk, mut dv) = (c.q.zeros_like(), c.k.zeros_like(), c.v.zeros_like());
        attention_backward(
            c.q.data(),
            c.k.data(),
            c.v.data(),
            &c.probs,
            datt.data(),
            len,
            d,
            dq.data_mut(),
            dk.data_mut(),
            dv.data_mut(),
        );
        apply_rope(dq.data_mut(), d, heads, 0, true);
        apply_rope(dk.data_mut(), d, heads, 0, true);
        let mut da = self.q.backward(&c.a, &c.qu, &dq, &mut g.q, base)?;
        da.add_assign(&self.k.backward(&c.a, &c.ku, &dk, &mut g.k, base)?)?;
        da.add_assign(&self.v.backward(&c.a, &c.vu, &dv, &mut g.v, base)?)?;
        let mut dx = self.ln1.backward(&c.ln1, &da, &mut g.ln1);
        dx.add_assign(&dh)?;
        Ok(dx)
    }

    /// Process `x` as rows following the `start` rows already in `keys`/`values`.
    fn extend(&self, x: &Tensor, heads: usize, keys: &mut Vec<f64>, values: &mut Vec<f64>) -> Result<Tensor> {
        let (n, d) = (x.rows(), x.cols());
        let start = keys.len() / d;
        let a = self.ln1.forward(x)?.0;
        let mut q = self.q.forward(&a)?;
        let mut k = self.k.forward(&a)?;
        let v = self.v.forward(&a)?;
        apply_rope(q.data_mut(), d, heads, start, false);
        apply_rope(k.data_mut(), d, heads, start, false);
        keys.extend_from_slice(k.data());
        values.extend_from_slice(v.data());
        let total = start + n;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut att = x.zeros_like();
        let mut s = vec![0.0; n * total];
        for h in 0..heads {
            let off = h * dh;
            gemm_strided(n, dh, total, &q.data()[off..], (d, 1), &keys[off..], (1, d), &mut s, (total, 1), false);
            for (i, row) in s.chunks_exact_mut(total).enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if j > start + i { f64::NEG_INFINITY } else { *v * scale };
                }
                softmax_in_place(row);
            }
            gemm_strided(n, total, dh, &s, (total, 1), &values[off..], (d, 1), &mut att.data_mut()[off..], (d, 1), false);
        }
        let h = x.add(&self.o.forward(&att)?)?;
        let b = self.ln2.forward(&h)?.0;
        let m = self.fc2.forward(&gelu(&self.fc1.forward(&b)?))?;
        h.add(&m)
    }
}

impl Parameters for DecoderBlock {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.ln1.collect_params(&join(prefix, "ln1"), out);
        self.q.collect_params(&join(prefix, "attn.q"), out);
        self.k.collect_params(&join(prefix, "attn.k"), out);
        self.v.collect_params(&join(prefix, "attn.v"), out);
        self.o.collect_params(&join(prefix, "attn.o"), out);
        self.ln2.collect_params(&join(prefix, "ln2"), out);
        self.fc1.collect_params(&join(prefix, "mlp.fc1"), out);
        self.fc2.collect_params(&join(prefix, "mlp.fc2"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.ln1.collect_params_mut(&join(prefix, "ln1"), out);
        self.q.collect_params_mut(&join(prefix, "attn.q"), out);
        self.k.collect_params_mut(&join(prefix, "attn.k"), out);
        self.v.collect_params_mut(&join(prefix, "attn.v"), out);
        self.o.collect_params_mut(&join(prefix, "attn.o"), out);
        self.ln2.collect_params_mut(&join(prefix, "ln2"), out);
        self.fc1.collect_params_mut(&join(prefix, "mlp.fc1"), out);
        self.fc2.collect_params_mut(&join(prefix, "mlp.fc2"), out);
    }
}

/// Byte-level decoder-only LM with rotary positions, pre-norm causal blocks,
/// a final norm and a LoRA-adapted vocabulary projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub cfg: LmConfig,
    /// `[vocab x d_model]`
    pub tok_emb: Tensor,
    pub blocks: Vec<DecoderBlock>,
    pub ln_f: Norm,
    /// `[vocab x d_model]`
    pub head: LoraLinear,
}

pub struct DecoderCache {
    blocks: Vec<BlockCache>,
    len: usize,
    positions: Vec<usize>,
    lnf: LayerNormCache,
    lnf_out: Tensor,
    head_u: Tensor,
}

/// Keys and values of every processed position, per layer, rotary already
/// applied to the keys.
#[derive(Clone, Debug)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Std of the frozen vocabulary projection; keeps initial logits near
/// uniform.
const HEAD_STD: f64 = 0.04;

impl Decoder {
    pub fn init(cfg: &LmConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        Ok(Self {
            cfg: cfg.clone(),
            tok_emb: Tensor::randn(&[cfg.vocab, d], 1.0, rng),
            blocks: (0..cfg.layers).map(|_| DecoderBlock::init(cfg, rng)).collect(),
            ln_f: Norm::new(d),
            head: LoraLinear::init(d, cfg.vocab, cfg.lora_rank, cfg.train_alpha, HEAD_STD, rng),
        })
    }

    pub fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    pub fn max_seq(&self) -> usize {
        self.cfg.max_seq
    }

    pub fn lora_layers(&self) -> Vec<&LoraLinear> {
        let mut out: Vec<&LoraLinear> = self.blocks.iter().flat_map(|b| b.loras()).collect();
        out.push(&self.head);
        out
    }

    pub fn lora_layers_mut(&mut self) -> Vec<&mut LoraLinear> {
        let mut out: Vec<&mut LoraLinear> = self.blocks.iter_mut().flat_map(|b| b.loras_mut()).collect();
        out.push(&mut self.head);
        out
    }

    /// Rows of the token embedding table.
    pub fn embed_tokens(&self, ids: &[u32]) -> Result<Vec<&[f64]>> {
        ids.iter()
            .map(|&t| {
                if (t as usize) < self.cfg.vocab {
                    Ok(self.tok_emb.row(t as usize))
                } else {
                    Err(Error::Argument(format!("token id {t} outside vocabulary")))
                }
            })
            .collect()
    }

    fn check_capacity(&self, len: usize) -> Result<()> {
        if len > self.cfg.max_seq {
            return Err(Error::Capacity { len, max: self.cfg.max_seq });
        }
        Ok(())
    }

    fn check_width(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.cols() != self.cfg.d_model {
            return dim_err(format!(
                "decoder expects [len x {}] embeddings, got {:?}",
                self.cfg.d_model,
                x.shape()
            ));
        }
        Ok(())
    }

    /// Logits `[len x vocab]` for every position of an embedded sequence.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cache = self.new_cache();
        let h = self.extend(&mut cache, x)?;
        self.logits(&h)
    }

    /// Final norm and vocabulary projection of residual rows.
    pub fn logits(&self, hidden: &Tensor) -> Result<Tensor> {
        let n = self.ln_f.forward(hidden)?.0;
        self.head.forward(&n)
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache {
            keys: vec![Vec::new(); self.blocks.len()],
            values: vec![Vec::new(); self.blocks.len()],
            len: 0,
        }
    }

    /// Run `x` after the positions already in `cache`; returns the final
    /// residual rows (before the output norm).
    pub fn extend(&self, cache: &mut KvCache, x: &Tensor) -> Result<Tensor> {
        self.check_width(x)?;
        self.check_capacity(cache.len + x.rows())?;
        let mut h = x.clone();
        for (l, block) in self.blocks.iter().enumerate() {
            h = block.extend(&h, self.cfg.heads, &mut cache.keys[l], &mut cache.values[l])?;
        }
        cache.len += x.rows();
        Ok(h)
    }

    /// Training forward: logits only at `positions`, plus what
    /// [`Decoder::backward`] needs.
    pub fn forward_train(&self, x: &Tensor, positions: &[usize]) -> Result<(Tensor, DecoderCache)> {
        self.check_width(x)?;
        self.check_capacity(x.rows())?;
        if positions.is_empty() || positions.iter().any(|&p| p >= x.rows()) {
            return Err(Error::Argument("logit positions must be nonempty and in range".into()));
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&h, self.cfg.heads)?;
            caches.push(c);
            h = y;
        }
        let rows: Vec<&[f64]> = positions.iter().map(|&p| h.row(p)).collect();
        let sel = Tensor::from_rows(&rows)?;
        let (lnf_out, lnf) = self.ln_f.forward(&sel)?;
        let (logits, head_u) = self.head.forward_cached(&lnf_out)?;
        Ok((
            logits,
            DecoderCache {
                blocks: caches,
                len: x.rows(),
                positions: positions.to_vec(),
                lnf,
                lnf_out,
                head_u,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// w.r.t. the input embeddings. Base weights (`w0`) get gradients only
    /// when `base_grad` is set.
    pub fn backward(&self, cache: &DecoderCache, dlogits: &Tensor, grad: &mut Decoder, base_grad: bool) -> Result<Tensor> {
        let dn = self.head.backward(&cache.lnf_out, &cache.head_u, dlogits, &mut grad.head, base_grad)?;
        let dsel = self.ln_f.backward(&cache.lnf, &dn, &mut grad.ln_f);
        let mut dx = Tensor::zeros(&[cache.len, self.cfg.d_model]);
        for (r, &p) in cache.positions.iter().enumerate() {
            for (a, b) in dx.row_mut(p).iter_mut().zip(dsel.row(r)) {
                *a += b;
            }
        }
        for ((block, c), g) in self.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
            dx = block.backward(c, &dx, self.cfg.heads, g, base_grad)?;
        }
        Ok(dx)
    }
}

impl Parameters for Decoder {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "tok_emb"), &self.tok_emb));
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect_params(&join(prefix, &format!("L{i}")), out);
        }
        self.ln_f.collect_params(&join(prefix, "ln_f"), out);
        self.head.collect_params(&join(prefix, "head"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "tok_emb"), &mut self.tok_emb));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_params_mut(&join(prefix, &format!("L{i}")), out);
        }
        self.ln_f.collect_params_mut(&join(prefix, "ln_f"), out);
        self.head.collect_params_mut(&join(prefix, "head"), out);
    }
}
