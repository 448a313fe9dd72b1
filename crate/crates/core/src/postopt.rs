//! Inference-time LoRA alpha rescaling, merging adapters into base weights,
//! and the alpha sweep.

use std::fmt::Write as _;

use crate::data::Template;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalMetrics};
use crate::lm::{is_lora_factor, LoraLinear};
use crate::model::Model;
use crate::numerics::{matmul, Tensor};
use crate::params::Parameters;
use crate::video::{SynthSample, TensorMap};

pub const DEFAULT_ALPHAS: [f64; 9] = [0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0];

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must be finite and >= 0, got {alpha}")))
    }
}

/// Use `alpha` in every LoRA layer of the LM.
pub fn set_alpha(model: &mut Model, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    for l in model.lm.lora_layers_mut() {
        l.alpha = alpha;
    }
    Ok(())
}

/// `w0 + (alpha / rank) * b a`.
pub fn merge_lora(layer: &LoraLinear, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    let mut w = layer.w0.clone();
    if alpha != 0.0 {
        w.axpy(alpha / layer.rank() as f64, &matmul(&layer.b, &layer.a)?)?;
    }
    Ok(w)
}

/// Copy of `model` whose LM base weights absorb the adapters at `alpha`;
/// the factors are zeroed.
pub fn merge_model(model: &Model, alpha: f64) -> Result<Model> {
    let mut out = model.clone();
    for l in out.lm.lora_layers_mut() {
        l.w0 = merge_lora(l, alpha)?;
        l.a.data_mut().fill(0.0);
        l.b.data_mut().fill(0.0);
        l.alpha = alpha;
    }
    Ok(out)
}

/// Checkpoint of the merged model without LoRA factor entries.
pub fn merged_checkpoint(model: &Model, alpha: f64) -> Result<TensorMap> {
    let mut map = merge_model(model, alpha)?.to_checkpoint()?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    map.retain(|k, _| !is_lora_factor(k, &names));
    Ok(map)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSweepReport {
    pub rows: Vec<AlphaSweepRow>,
}

impl AlphaSweepReport {
    pub const HEADER: &'static str = "alpha,spatial_acc,temporal_acc,mean_gen_len";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            let m = r.metrics;
            let _ = writeln!(s, "{},{},{},{}", r.alpha, m.spatial_acc, m.temporal_acc, m.mean_gen_len);
        }
        s
    }
}

/// Evaluate `model` at each alpha (strictly increasing, nonnegative).
pub fn alpha_sweep(model: &Model, eval: &[SynthSample], alphas: &[f64], template: Template) -> Result<AlphaSweepReport> {
    if alphas.is_empty() {
        return Err(Error::Argument("alpha list is empty".into()));
    }
    if eval.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("alphas must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    let mut view = model.clone();
    for &alpha in alphas {
        set_alpha(&mut view, alpha)?;
        rows.push(AlphaSweepRow { alpha, metrics: evaluate(&view, eval, template)? });
    }
    Ok(AlphaSweepReport { rows })
}
