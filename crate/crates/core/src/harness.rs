//! Pooling-shape grid search and the baseline comparison, with an optional
//! on-disk checkpoint cache keyed by the full training config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::Template;
use crate::diagnostics::{token_norms, DEFAULT_BINS, DEFAULT_DOMINANCE_K};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalMetrics};
use crate::model::Model;
use crate::numerics::Tensor;
use crate::pooling::{downsample_rate, PoolSpec, Pooling};
use crate::trainer::{train_pipeline, TrainConfig};
use crate::video::SynthSample;

/// Env var naming the checkpoint cache directory.
pub const CACHE_ENV: &str = "PLLAB_CACHE_DIR";

/// One model to train: input frame count and pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub id: String,
    pub frames: usize,
    pub pooling: Pooling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchPlan {
    pub entries: Vec<PlanEntry>,
}

impl GridSearchPlan {
    /// Spatial shapes `n x n` at 4 input frames and temporal targets
    /// `(t', 2, 2)` at 16 frames on a 4x4 token grid.
    pub fn desk() -> Self {
        Self::build(4, &[1, 2, 4], 16, &[1, 2, 4, 8, 16], 2)
    }

    /// The 24x24-grid plan: nine spatial shapes and three temporal targets
    /// at 12x12. Needs a 96 px frame config.
    pub fn full() -> Self {
        Self::build(4, &[1, 2, 4, 6, 8, 12, 16, 20, 24], 16, &[4, 8, 16], 12)
    }

    fn build(spatial_frames: usize, sides: &[usize], temporal_frames: usize, ts: &[usize], side: usize) -> Self {
        let spatial = sides.iter().map(|&n| PlanEntry {
            id: format!("spatial_{n}x{n}"),
            frames: spatial_frames,
            pooling: Pooling::Adaptive(PoolSpec::new(spatial_frames, n, n)),
        });
        let temporal = ts.iter().map(|&t| PlanEntry {
            id: format!("temporal_{t}"),
            frames: temporal_frames,
            pooling: Pooling::Adaptive(PoolSpec::new(t, side, side)),
        });
        Self { entries: spatial.chain(temporal).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowMetrics {
    pub eval: EvalMetrics,
    /// Over the visual tokens of every evaluation clip.
    pub max_over_median: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub config_id: String,
    pub template: Template,
    pub frames: usize,
    pub pooling: Pooling,
    /// Error message for entries that could not run.
    pub outcome: std::result::Result<RowMetrics, String>,
}

impl ReportRow {
    /// Temporal extent after pooling over temporal extent before. Sequence
    /// poolings keep every frame's information and report 1.
    pub fn downsample_rate(&self) -> Option<f64> {
        match self.pooling {
            Pooling::Adaptive(s) => downsample_rate(self.frames, s.t_out).ok(),
            _ => Some(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub const HEADER: &'static str = "config_id,template,frames,pooling,downsample_rate,spatial_acc,temporal_acc,mean_gen_len,max_over_median,status";

    /// Error rows carry `NA` metrics and the message in `status`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            let rate = r.downsample_rate().map_or("NA".into(), |v| v.to_string());
            let _ = write!(s, "{},{},{},{},{rate},", r.config_id, r.template.label(), r.frames, r.pooling.label());
            match &r.outcome {
                Ok(m) => {
                    let e = m.eval;
                    let _ = writeln!(s, "{},{},{},{},ok", e.spatial_acc, e.temporal_acc, e.mean_gen_len, m.max_over_median);
                }
                Err(msg) => {
                    let _ = writeln!(s, "NA,NA,NA,NA,error: {}", msg.replace([',', '\n'], ";"));
                }
            }
        }
        s
    }
}

/// Hex SHA-256 of the config's JSON form.
pub fn cache_key(cfg: &TrainConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Cache directory from [`CACHE_ENV`], if set and nonempty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Train under `cfg`, or load the checkpoint a previous identical run left
/// in `cache`.
pub fn train_cached(cfg: &TrainConfig, cache: Option<&Path>) -> Result<Model> {
    let path = match cache {
        Some(dir) => Some(dir.join(format!("{}.plck", cache_key(cfg)?))),
        None => None,
    };
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        let m = Model::load(p)?;
        if m.cfg == cfg.model {
            return Ok(m);
        }
    }
    let out = train_pipeline(cfg, |_, _| Ok(()))?;
    if let Some(p) = path {
        std::fs::create_dir_all(p.parent().expect("cache file has a parent"))?;
        let tmp = p.with_extension("tmp");
        out.model.save(&tmp)?;
        std::fs::rename(&tmp, &p)?;
    }
    Ok(out.model)
}

fn visual_norm_ratio(model: &Model, eval: &[SynthSample]) -> Result<f64> {
    let mut rows = Vec::new();
    let mut d = 0;
    for s in eval {
        let t = model.visual_tokens(&s.video)?;
        d = t.cols();
        rows.extend(t.into_data());
    }
    let n = rows.len() / d;
    Ok(token_norms(&Tensor::new(vec![n, d], rows)?, DEFAULT_DOMINANCE_K, DEFAULT_BINS)?.max_over_median)
}

fn run_entry(base: &TrainConfig, e: &PlanEntry, eval: &[SynthSample], templates: &[Template], cache: Option<&Path>) -> Result<Vec<RowMetrics>> {
    let mut cfg = base.clone();
    cfg.model.frames = e.frames;
    cfg.model.pooling = e.pooling;
    cfg.validate()?;
    let model = train_cached(&cfg, cache)?;
    let ratio = visual_norm_ratio(&model, eval)?;
    templates
        .iter()
        .map(|&t| Ok(RowMetrics { eval: evaluate(&model, eval, t)?, max_over_median: ratio }))
        .collect()
}

fn run_plan(base: &TrainConfig, entries: &[PlanEntry], eval: &[SynthSample], templates: &[Template], cache: Option<&Path>) -> Result<ExperimentReport> {
    if entries.is_empty() {
        return Err(Error::Argument("plan is empty".into()));
    }
    if eval.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let mut rows = Vec::new();
    for e in entries {
        let result = match run_entry(base, e, eval, templates, cache) {
            Ok(m) => m.into_iter().map(Ok).collect(),
            Err(err @ (Error::Config(_) | Error::Dimension(_) | Error::Capacity { .. })) => {
                vec![Err(err.to_string()); templates.len()]
            }
            Err(err) => return Err(err),
        };
        for (&template, outcome) in templates.iter().zip(result) {
            rows.push(ReportRow { config_id: e.id.clone(), template, frames: e.frames, pooling: e.pooling, outcome });
        }
    }
    Ok(ExperimentReport { rows })
}

/// Train and evaluate every plan entry in order. Entries whose pooling does
/// not fit the encoder grid become error rows.
pub fn grid_search(plan: &GridSearchPlan, base: &TrainConfig, eval: &[SynthSample], cache: Option<&Path>) -> Result<ExperimentReport> {
    run_plan(base, &plan.entries, eval, &[Template::Ind], cache)
}

/// The three visual-token schemes compared under one budget.
pub fn baseline_entries(frames: usize, spec: PoolSpec) -> Vec<PlanEntry> {
    vec![
        PlanEntry { id: "n_frame".into(), frames, pooling: Pooling::NFrame },
        PlanEntry { id: "vcg".into(), frames, pooling: Pooling::Vcg },
        PlanEntry { id: "adaptive".into(), frames, pooling: Pooling::Adaptive(spec) },
    ]
}

/// n-frame, vcg and adaptive pooling trained on the same data stream under
/// `base`, each evaluated with both prompt templates.
pub fn compare_baselines(base: &TrainConfig, spec: PoolSpec, eval: &[SynthSample], cache: Option<&Path>) -> Result<ExperimentReport> {
    run_plan(base, &baseline_entries(base.model.frames, spec), eval, &Template::ALL, cache)
}
