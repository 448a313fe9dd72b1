use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pllab_core::data::{balanced_eval_set, samples_from_tensors, samples_to_tensors, Template};
use pllab_core::diagnostics::{neighbor_similarity, text_length_stats, token_norms, DEFAULT_BINS, DEFAULT_DOMINANCE_K};
use pllab_core::harness::{cache_dir_from_env, compare_baselines, grid_search, GridSearchPlan};
use pllab_core::lm::{detokenize, greedy_generate, tokenize, TokenSeq};
use pllab_core::model::Model;
use pllab_core::numerics::Rng;
use pllab_core::pooling::{adaptive_pool, PoolSpec};
use pllab_core::postopt::{alpha_sweep, merged_checkpoint, DEFAULT_ALPHAS};
use pllab_core::trainer::{log_csv, train_pipeline, DataSource, TrainConfig};
use pllab_core::video::{gen_synth_sample, load_tensors, save_tensors, TensorMap, Video};
use pllab_core::vision::FeatureGrid;
use serde_json::json;

const DEFAULT_SEED: u64 = 42;
/// PLCK entry holding a feature grid.
const FEATURES: &str = "features";
/// PLCK entry holding a single clip.
const VIDEO: &str = "video";

#[derive(Parser)]
#[command(name = "pllab", version, about = "Pooled video-feature adaptation lab")]
struct Cli {
    /// Seed for data generation and model init (overrides the config's).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training config JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Primary output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    Ind,
    Ood,
}

impl From<TemplateArg> for Template {
    fn from(t: TemplateArg) -> Self {
        match t {
            TemplateArg::Ind => Template::Ind,
            TemplateArg::Ood => Template::Ood,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic clips with color/direction labels.
    GenData {
        /// Number of random clips.
        #[arg(long, default_value_t = 16, conflicts_with = "balanced")]
        count: usize,
        /// Instead, this many clips per (color, direction) pair.
        #[arg(long)]
        balanced: Option<usize>,
        #[arg(long, default_value_t = 16)]
        grid_px: usize,
    },
    /// Train a model; writes the final checkpoint to --out.
    Train {
        /// Loss log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Override total_steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a reply for one clip.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// PLCK with a `video` entry or a gen-data sample file.
        #[arg(long, conflicts_with = "synth_seed")]
        video: Option<PathBuf>,
        /// Sample index inside a gen-data file.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Render a random synthetic clip from this seed instead.
        #[arg(long)]
        synth_seed: Option<u64>,
        #[arg(long)]
        prompt: String,
        #[arg(long, value_enum, default_value = "ind")]
        template: TemplateArg,
        #[arg(long, default_value_t = 48)]
        max_new: usize,
        /// Write the visual tokens the LM sees, as a feature grid.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Adaptive average pooling of a stored feature grid.
    Pool {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        t_out: usize,
        #[arg(long)]
        w_out: usize,
        #[arg(long)]
        h_out: usize,
    },
    /// Norm, neighbor-similarity and length statistics as JSON.
    Diagnose {
        #[arg(long)]
        features: PathBuf,
        /// Text file with one generation per line.
        #[arg(long)]
        generations: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_DOMINANCE_K)]
        k: f64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Evaluate a checkpoint across LoRA alphas.
    SweepAlpha {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// gen-data sample file.
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, value_enum, default_value = "ind")]
        template: TemplateArg,
    },
    /// Fold LoRA factors into the base weights.
    Merge {
        #[arg(long)]
        alpha: f64,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train and evaluate one model per pooling shape.
    GridSearch {
        #[arg(long, value_enum, default_value = "desk")]
        plan: PlanArg,
        #[arg(long)]
        steps: Option<usize>,
        /// Evaluation clips per (color, direction) pair.
        #[arg(long, default_value_t = 2)]
        eval_per_combo: usize,
    },
    /// n-frame, vcg and adaptive pooling under one budget, IND and OOD prompts.
    CompareBaselines {
        #[arg(long)]
        steps: Option<usize>,
        /// Adaptive target, TxWxH.
        #[arg(long, default_value = "16x2x2")]
        spec: String,
        #[arg(long, default_value_t = 2)]
        eval_per_combo: usize,
    },
}

/// Bad flag values or missing arguments.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<pllab_core::Error>() {
        Some(pllab_core::Error::Numeric(_)) => 4,
        Some(pllab_core::Error::Argument(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_path(cli: &Cli) -> Result<&Path> {
    match &cli.out {
        Some(p) => Ok(p),
        None => usage("--out is required for this command"),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn train_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(pllab_core::Error::from)?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_features(path: &Path) -> Result<FeatureGrid> {
    let map = load_tensors(path)?;
    let t = map
        .get(FEATURES)
        .ok_or_else(|| pllab_core::Error::Config(format!("{} has no '{FEATURES}' entry", path.display())))?;
    Ok(FeatureGrid::new(t.clone())?)
}

fn save_features(path: &Path, grid: FeatureGrid) -> Result<()> {
    let mut map = TensorMap::new();
    map.insert(FEATURES.into(), grid.into_tensor());
    Ok(save_tensors(path, &map)?)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.cmd {
        Cmd::GenData { count, balanced, grid_px } => {
            if *grid_px < 8 {
                return usage("--grid-px must be >= 8");
            }
            let samples = match balanced {
                Some(k) => balanced_eval_set(seed, *k, *grid_px),
                None => {
                    let mut rng = Rng::new(seed);
                    (0..*count).map(|_| gen_synth_sample(&mut rng, *grid_px)).collect()
                }
            };
            save_tensors(out_path(&cli)?, &samples_to_tensors(&samples))?;
        }
        Cmd::Train { log, steps } => {
            let mut cfg = train_config(&cli)?;
            if let Some(s) = steps {
                cfg.total_steps = *s;
            }
            let out = out_path(&cli)?;
            let total = cfg.total_steps;
            let result = train_pipeline(&cfg, |step, m| {
                let path = if step == total { out.to_path_buf() } else { out.with_extension(format!("step{step}.plck")) };
                m.save(path)
            })?;
            if let Some(p) = log {
                write(p, &log_csv(&result.log))?;
                if cfg.image_pretrain.is_some() {
                    write(&p.with_extension("image.csv"), &log_csv(&result.image_log))?;
                }
            }
        }
        Cmd::Infer { checkpoint, video, index, synth_seed, prompt, template, max_new, dump_features } => {
            if *max_new == 0 {
                return usage("--max-new must be >= 1");
            }
            let model = load_model(checkpoint)?;
            let clip = match (video, synth_seed) {
                (Some(p), _) => read_clip(p, *index)?,
                (None, Some(s)) => gen_synth_sample(&mut Rng::new(*s), model.cfg.vision.frame_px).video,
                (None, None) => return usage("give --video or --synth-seed"),
            };
            let visual = model.visual_tokens(&clip).map_err(geometry_error)?;
            let text = tokenize(&Template::from(*template).prompt(prompt));
            let reply = greedy_generate(&model.lm, &visual, &text, *max_new)?;
            let reply = detokenize(&reply);
            println!("{reply}");
            if let Some(p) = &cli.out {
                write(p, &format!("{reply}\n"))?;
            }
            if let Some(p) = dump_features {
                save_features(p, model.pooled_grid(&clip)?)?;
            }
        }
        Cmd::Pool { input, t_out, w_out, h_out } => {
            let grid = load_features(input)?;
            let pooled = adaptive_pool(&grid, PoolSpec::new(*t_out, *w_out, *h_out))
                .map_err(|e| Usage(e.to_string()))?;
            save_features(out_path(&cli)?, pooled)?;
        }
        Cmd::Diagnose { features, generations, k, bins } => {
            let grid = load_features(features)?;
            let norms = token_norms(&grid.tokens(), *k, *bins)?;
            let sim = neighbor_similarity(&grid);
            let lengths = match generations {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let gens: Vec<TokenSeq> = text.lines().map(tokenize).collect();
                    Some(text_length_stats(&gens, *bins)?)
                }
                None => None,
            };
            let report = json!({
                "norms": norms.norms,
                "histogram": norms.histogram,
                "max_over_median": norms.max_over_median,
                "dominant_count": norms.dominant_count,
                "dominant": norms.dominant,
                "mean_spatial": sim.mean_spatial,
                "mean_temporal": sim.mean_temporal,
                "spatial_pairs": sim.spatial.len(),
                "temporal_pairs": sim.temporal.len(),
                "lengths": lengths.as_ref().map(|l| &l.lengths),
                "length_histogram": lengths.as_ref().map(|l| &l.histogram),
                "mean_length": lengths.as_ref().map(|l| l.mean),
                "median_length": lengths.as_ref().map(|l| l.median),
            });
            write(out_path(&cli)?, &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Cmd::SweepAlpha { checkpoint, alphas, eval, template } => {
            let model = load_model(checkpoint)?;
            let samples = samples_from_tensors(&load_tensors(eval)?)?;
            let alphas = alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
            let report = alpha_sweep(&model, &samples, &alphas, (*template).into()).map_err(geometry_error)?;
            write(out_path(&cli)?, &report.to_csv())?;
        }
        Cmd::Merge { alpha, input } => {
            let model = load_model(input)?;
            save_tensors(out_path(&cli)?, &merged_checkpoint(&model, *alpha)?)?;
        }
        Cmd::GridSearch { plan, steps, eval_per_combo } => {
            let mut base = harness_config(&cli, *steps)?;
            let plan = match plan {
                PlanArg::Desk => GridSearchPlan::desk(),
                PlanArg::Full => {
                    base.model.vision.frame_px = 96;
                    base.model.lm.max_seq = 2560;
                    GridSearchPlan::full()
                }
            };
            let eval = eval_set(&base, *eval_per_combo)?;
            let report = grid_search(&plan, &base, &eval, cache_dir_from_env().as_deref())?;
            write(out_path(&cli)?, &report.to_csv())?;
        }
        Cmd::CompareBaselines { steps, spec, eval_per_combo } => {
            let base = harness_config(&cli, *steps)?;
            let spec = parse_spec(spec)?;
            let eval = eval_set(&base, *eval_per_combo)?;
            let report = compare_baselines(&base, spec, &eval, cache_dir_from_env().as_deref())?;
            write(out_path(&cli)?, &report.to_csv())?;
        }
    }
    Ok(())
}

/// Training config for harness runs: the given config (streamed data by
/// default) with an optional step budget.
fn harness_config(cli: &Cli, steps: Option<usize>) -> Result<TrainConfig> {
    let mut cfg = train_config(cli)?;
    if cli.config.is_none() {
        cfg.data = DataSource::Stream;
    }
    if let Some(s) = steps {
        cfg.total_steps = s;
    }
    Ok(cfg)
}

fn eval_set(base: &TrainConfig, per_combo: usize) -> Result<Vec<pllab_core::video::SynthSample>> {
    if per_combo == 0 {
        return usage("--eval-per-combo must be >= 1");
    }
    // disjoint from the training stream, which is seeded from base.seed
    Ok(balanced_eval_set(base.seed.wrapping_add(1), per_combo, base.model.vision.frame_px))
}

fn parse_spec(s: &str) -> Result<PoolSpec> {
    let parts: Vec<usize> = s.split('x').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| Usage(format!("bad spec '{s}', want TxWxH")))?;
    match parts[..] {
        [t, w, h] => Ok(PoolSpec::new(t, w, h)),
        _ => usage(format!("bad spec '{s}', want TxWxH")),
    }
}

fn read_clip(path: &Path, index: usize) -> Result<Video> {
    let map = load_tensors(path)?;
    if let Some(v) = map.get(VIDEO) {
        return Ok(Video::new(v.clone())?);
    }
    let samples = samples_from_tensors(&map)?;
    match samples.into_iter().nth(index) {
        Some(s) => Ok(s.video),
        None => usage(format!("{} has no sample {index}", path.display())),
    }
}

/// Input clips that do not fit the checkpoint's encoder are a configuration
/// problem, not a shape bug.
fn geometry_error(e: pllab_core::Error) -> pllab_core::Error {
    match e {
        pllab_core::Error::Dimension(m) => pllab_core::Error::Config(format!("input does not match checkpoint: {m}")),
        other => other,
    }
}
