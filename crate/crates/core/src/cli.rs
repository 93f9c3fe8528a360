//! Command-line front end: dataset generation, the two training stages,
//! ablation sweeps, tracking and evaluation.
//!
//! Every command writes `manifest.txt` and `config.cfg` into its output
//! directory. Default locations hang off `$REWARDLOC_OUT` (or `./runs`), so
//! `gen`, `warmup`, `train`, `track` and `eval` chain without any flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::kv::Kv;
use crate::manifest::RunManifest;
use crate::metrics::{aggregate, evaluate_sequence, EvalReport};
use crate::model::{load_checkpoint, Model, ModelConfig, Propagation, CHECKPOINT_PARAMS};
use crate::rl::PolicyOptimizer;
use crate::synthworld::{load_annotations, make_split, read_split, write_split, Sequence, SPLIT_NAMES};
use crate::tracker::{run_sequence, write_results, write_score_maps, Localizer, SequenceResult};
use crate::train::{run_prior, run_rl, run_warmup, StageReport, Variant, CHECKPOINT_DIR};

pub const OUT_ENV: &str = "REWARDLOC_OUT";
pub const CONFIG_FILE: &str = "config.cfg";
/// Full run config stored next to a trained checkpoint.
pub const RUN_CONFIG: &str = "run.cfg";
pub const SCOREMAP_DIR: &str = "scoremaps";

#[derive(Debug, Parser)]
#[command(name = "rewardloc", version, about = "Reward-driven target localization for tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/val/shifted_test splits.
    Gen(GenArgs),
    /// Regression warmup of the encoder and box head.
    Warmup(StageArgs),
    /// Second stage: reward-driven policy, or a prior baseline via --variant.
    Train(TrainArgs),
    /// Train a list of named variants and tabulate their scores.
    Ablate(AblateArgs),
    /// Run a checkpoint over a split and write per-sequence boxes.
    Track(TrackArgs),
    /// Score result files against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (key=value); absent keys keep defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sequences per split.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset root written by `gen`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides train.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Warmup run directory or checkpoint directory.
    #[arg(long, conflicts_with = "no_warmup")]
    pub warmup: Option<PathBuf>,
    /// Train everything from scratch in the second stage.
    #[arg(long)]
    pub no_warmup: bool,
    /// actor-critic, ppo or grpo.
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<PolicyOptimizer>,
    /// layer-aligned or deep-to-shallow.
    #[arg(long, value_parser = parse_propagation)]
    pub propagation: Option<Propagation>,
    /// relo, corner-prior, center-heatmap or iou-heatmap.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Shared warmup run; trained into <out>/warmup when absent.
    #[arg(long)]
    pub warmup: Option<PathBuf>,
    /// Comma-separated variant names (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
    pub variants: Vec<Ablation>,
    /// Split scored in the table.
    #[arg(long, default_value = "shifted_test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    /// Train run directory or checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Also write one score-map PNG per frame.
    #[arg(long)]
    pub dump_scoremaps: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of `<sequence>.txt` result files.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    pub split: String,
}

fn parse_optimizer(s: &str) -> std::result::Result<PolicyOptimizer, String> {
    PolicyOptimizer::parse(s).map_err(|e| e.to_string())
}

fn parse_propagation(s: &str) -> std::result::Result<Propagation, String> {
    Propagation::parse(s).map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    Ablation::parse(s).map_err(|e| e.to_string())
}

/// `$REWARDLOC_OUT`, or `runs` in the working directory.
pub fn default_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Creates `dir`, refusing to reuse a non-empty one unless `overwrite`.
pub fn prepare_output(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            if !overwrite {
                return Err(Error::OutputExists(dir.to_path_buf()));
            }
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn write_run_files(dir: &Path, cfg: &Config, manifest: RunManifest) -> Result<()> {
    cfg.save(&dir.join(CONFIG_FILE))?;
    manifest.write(dir)
}

/// Accepts either a checkpoint directory or a run directory holding one.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.join(CHECKPOINT_PARAMS).exists() {
        return Ok(path.to_path_buf());
    }
    let nested = path.join(CHECKPOINT_DIR);
    if nested.join(CHECKPOINT_PARAMS).exists() {
        return Ok(nested);
    }
    Err(Error::Missing(nested.join(CHECKPOINT_PARAMS)))
}

/// Writes every split of `cfg.split` under `out`.
pub fn generate_dataset(cfg: &Config, out: &Path) -> Result<()> {
    for split in SPLIT_NAMES {
        let seqs = make_split(&cfg.split, split)?;
        info!("{split}: {} sequences", seqs.len());
        write_split(out, split, &seqs)?;
    }
    Ok(())
}

/// The checkpoint's architecture must equal the configured one; the corner
/// head may differ because the warmup never trains it.
fn check_model(found: &ModelConfig, want: &ModelConfig, path: &Path) -> Result<()> {
    let a = ModelConfig { corner_head: false, ..found.clone() };
    let b = ModelConfig { corner_head: false, ..want.clone() };
    if a != b {
        let (mut ka, mut kb) = (Kv::new(), Kv::new());
        a.write_kv(&mut ka, "");
        b.write_kv(&mut kb, "");
        let diff: Vec<String> = ka
            .keys()
            .filter(|k| ka.get_str(k) != kb.get_str(k))
            .map(|k| format!("{k}: checkpoint {} vs config {}", ka.get_str(k).unwrap_or(""), kb.get_str(k).unwrap_or("")))
            .collect();
        return Err(Error::Config(format!(
            "checkpoint {} does not match the configured model ({})",
            path.display(),
            diff.join(", ")
        )));
    }
    Ok(())
}

/// Model for the second stage: the warmup weights (or a fresh init), with a
/// corner head added for the corner baseline.
pub fn second_stage_model(cfg: &Config, warm: Option<&Model>) -> Result<Model> {
    let want = ModelConfig {
        corner_head: cfg.train.variant == Variant::CornerPrior,
        ..cfg.model.clone()
    };
    let mut model = Model::new(want)?;
    if let Some(w) = warm {
        check_model(&w.cfg, &cfg.model, Path::new("(warmup)"))?;
        model.copy_matching(&w.params);
    }
    Ok(model)
}

/// Runs the second stage selected by `cfg.train.variant`.
pub fn train_stage(model: &mut Model, train: &[Sequence], cfg: &Config, out: Option<&Path>) -> Result<StageReport> {
    match cfg.train.variant {
        Variant::Relo => run_rl(model, train, &cfg.train, &cfg.rl, out),
        _ => run_prior(model, train, &cfg.train, &cfg.rl, out),
    }
}

pub fn localizer_for(variant: Variant) -> Localizer {
    match variant {
        Variant::CornerPrior => Localizer::Corner,
        _ => Localizer::Policy,
    }
}

fn save_run_config(dir: &Path, cfg: &Config) -> Result<()> {
    cfg.save(&dir.join(CHECKPOINT_DIR).join(RUN_CONFIG))
}

fn apply_stage_args(cfg: &mut Config, a: &StageArgs) {
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
}

fn data_root(a: &Option<PathBuf>) -> PathBuf {
    a.clone().unwrap_or_else(|| default_root().join("data"))
}

pub fn cmd_gen(a: &GenArgs) -> Result<PathBuf> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if let Some(n) = a.count {
        if n == 0 {
            return Err(Error::Config("--count must be positive".into()));
        }
        cfg.split.train = n;
        cfg.split.val = n;
        cfg.split.shifted_test = n;
    }
    let out = a.common.out.clone().unwrap_or_else(|| default_root().join("data"));
    prepare_output(&out, a.common.overwrite)?;
    generate_dataset(&cfg, &out)?;
    let m = RunManifest::new("gen", a.common.config.as_deref(), cfg.split.seed, &out, &cfg.to_text());
    let m = match a.count {
        Some(n) => m.with("count", n),
        None => m,
    };
    write_run_files(&out, &cfg, m)?;
    Ok(out)
}

pub fn cmd_warmup(a: &StageArgs) -> Result<PathBuf> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    apply_stage_args(&mut cfg, a);
    let data = data_root(&a.data);
    let train = read_split(&data, "train")?;
    let out = a.common.out.clone().unwrap_or_else(|| default_root().join("warmup"));
    prepare_output(&out, a.common.overwrite)?;
    let m = RunManifest::new("warmup", a.common.config.as_deref(), cfg.train.seed, &out, &cfg.to_text())
        .with("data", data.display());
    write_run_files(&out, &cfg, m)?;
    let mut model = Model::new(cfg.model.clone())?;
    run_warmup(&mut model, &train, &cfg.train, Some(&out))?;
    Ok(out)
}

/// Loads the warmup model a second stage starts from, if any.
fn load_warmup(path: Option<&Path>, no_warmup: bool) -> Result<Option<(Model, PathBuf)>> {
    if no_warmup {
        return Ok(None);
    }
    let p = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_root().join("warmup"));
    let dir = resolve_checkpoint(&p)?;
    Ok(Some((load_checkpoint(&dir)?, dir)))
}

pub fn cmd_train(a: &TrainArgs) -> Result<PathBuf> {
    let mut cfg = load_config(a.stage.common.config.as_deref())?;
    apply_stage_args(&mut cfg, &a.stage);
    if let Some(o) = a.optimizer {
        cfg.rl.optimizer = o;
    }
    if let Some(p) = a.propagation {
        cfg.model.propagation = p;
    }
    if let Some(v) = a.variant {
        cfg.train.variant = v;
    }
    cfg.train.no_warmup |= a.no_warmup;
    let warm = load_warmup(a.warmup.as_deref(), cfg.train.no_warmup)?;
    if let Some((w, dir)) = &warm {
        check_model(&w.cfg, &cfg.model, dir)?;
    }
    let data = data_root(&a.stage.data);
    let train = read_split(&data, "train")?;
    let out = a.stage.common.out.clone().unwrap_or_else(|| default_root().join("train"));
    prepare_output(&out, a.stage.common.overwrite)?;
    let mut m = RunManifest::new("train", a.stage.common.config.as_deref(), cfg.train.seed, &out, &cfg.to_text())
        .with("data", data.display());
    if let Some((_, dir)) = &warm {
        m = m.with("warmup", dir.display());
    }
    write_run_files(&out, &cfg, m)?;
    let mut model = second_stage_model(&cfg, warm.as_ref().map(|w| &w.0))?;
    train_stage(&mut model, &train, &cfg, Some(&out))?;
    save_run_config(&out, &cfg)?;
    Ok(out)
}

/// Named rows of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Baseline,
    CornerPrior,
    CenterHeatmap,
    IouHeatmap,
    Ppo,
    Grpo,
    NoValue,
    NoAucReward,
    NoIouReward,
    T2,
    DeepToShallow,
    UnfreezeEncoder,
    UnfreezeRegression,
    NoWarmup,
    /// RL starting from a center-heatmap-trained policy head.
    PriorInit,
}

impl Ablation {
    pub const ALL: [Ablation; 15] = [
        Ablation::Baseline,
        Ablation::CornerPrior,
        Ablation::CenterHeatmap,
        Ablation::IouHeatmap,
        Ablation::Ppo,
        Ablation::Grpo,
        Ablation::NoValue,
        Ablation::NoAucReward,
        Ablation::NoIouReward,
        Ablation::T2,
        Ablation::DeepToShallow,
        Ablation::UnfreezeEncoder,
        Ablation::UnfreezeRegression,
        Ablation::NoWarmup,
        Ablation::PriorInit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::CornerPrior => "corner-prior",
            Ablation::CenterHeatmap => "center-heatmap",
            Ablation::IouHeatmap => "iou-heatmap",
            Ablation::Ppo => "ppo",
            Ablation::Grpo => "grpo",
            Ablation::NoValue => "no-value",
            Ablation::NoAucReward => "no-auc-reward",
            Ablation::NoIouReward => "no-iou-reward",
            Ablation::T2 => "t2",
            Ablation::DeepToShallow => "deep-to-shallow",
            Ablation::UnfreezeEncoder => "unfreeze-encoder",
            Ablation::UnfreezeRegression => "unfreeze-regression",
            Ablation::NoWarmup => "no-warmup",
            Ablation::PriorInit => "prior-init",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }

    /// The config this row trains with.
    pub fn apply(self, base: &Config) -> Config {
        let mut c = base.clone();
        match self {
            Ablation::Baseline | Ablation::PriorInit => {}
            Ablation::CornerPrior => c.train.variant = Variant::CornerPrior,
            Ablation::CenterHeatmap => c.train.variant = Variant::CenterHeatmap,
            Ablation::IouHeatmap => c.train.variant = Variant::IouHeatmap,
            Ablation::Ppo => c.rl.optimizer = PolicyOptimizer::Ppo,
            Ablation::Grpo => c.rl.optimizer = PolicyOptimizer::Grpo,
            Ablation::NoValue => c.rl.use_value = false,
            Ablation::NoAucReward => c.rl.lambda = 0.0,
            Ablation::NoIouReward => c.rl.iou_weight = 0.0,
            Ablation::T2 => c.rl.clip_len = 2,
            Ablation::DeepToShallow => c.model.propagation = Propagation::DeepToShallow,
            Ablation::UnfreezeEncoder => c.train.unfreeze_encoder = true,
            Ablation::UnfreezeRegression => c.train.unfreeze_regression = true,
            Ablation::NoWarmup => c.train.no_warmup = true,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationTable {
    pub split: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,auc,precision,norm_precision,ao\n");
        for r in &self.rows {
            let e = &r.report;
            let _ = writeln!(s, "{},{},{},{},{}", r.name, e.auc, e.precision, e.norm_precision, e.ao);
        }
        s
    }

    /// Fixed-width table in percent, with the AUC change against the first row.
    pub fn to_text(&self) -> String {
        let mut s = format!("split: {}\n", self.split);
        let _ = writeln!(
            s,
            "{:<22}{:>8}{:>8}{:>8}{:>8}{:>9}",
            "variant", "AUC", "P", "P_Norm", "AO", "dAUC"
        );
        let base = self.rows.first().map_or(0.0, |r| r.report.auc);
        for r in &self.rows {
            let e = &r.report;
            let _ = writeln!(
                s,
                "{:<22}{:>8.1}{:>8.1}{:>8.1}{:>8.1}{:>+9.1}",
                r.name,
                100.0 * e.auc,
                100.0 * e.precision,
                100.0 * e.norm_precision,
                100.0 * e.ao,
                100.0 * (e.auc - base)
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join("ablation.csv");
        fs::write(&p, self.to_csv()).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("ablation.txt");
        fs::write(&p, self.to_text()).map_err(|e| Error::io(&p, e))?;
        let curves: Vec<(&str, &crate::metrics::SuccessCurve)> =
            self.rows.iter().map(|r| (r.name.as_str(), &r.report.success)).collect();
        let p = dir.join("success.svg");
        fs::write(&p, crate::plot::success_svg(&curves)).map_err(|e| Error::io(&p, e))
    }
}

/// Tracks every sequence and scores the boxes.
pub fn track_and_score(model: &Model, seqs: &[Sequence], localizer: Localizer) -> Result<(Vec<SequenceResult>, EvalReport)> {
    crate::tracker::evaluate_model(model, seqs, localizer)
}

/// Trains one ablation row under `dir` and scores it on `eval`. `warm` is
/// the shared warmup model for rows that keep the default routing.
pub fn run_ablation(
    ab: Ablation,
    base: &Config,
    warm: &dyn Fn(&Config) -> Result<Model>,
    train: &[Sequence],
    eval: &[Sequence],
    dir: &Path,
) -> Result<AblationRow> {
    let cfg = ab.apply(base);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(&dir.join(CONFIG_FILE))?;
    let w = if cfg.train.no_warmup { None } else { Some(warm(&cfg)?) };
    let mut model = second_stage_model(&cfg, w.as_ref())?;
    if ab == Ablation::PriorInit {
        let prior = Config {
            train: crate::train::TrainConfig {
                variant: Variant::CenterHeatmap,
                ..cfg.train.clone()
            },
            ..cfg.clone()
        };
        run_prior(&mut model, train, &prior.train, &prior.rl, Some(&dir.join("prior")))?;
    }
    train_stage(&mut model, train, &cfg, Some(dir))?;
    save_run_config(dir, &cfg)?;
    let (_, report) = track_and_score(&model, eval, localizer_for(cfg.train.variant))?;
    report.write(&dir.join("eval"))?;
    info!("{}: auc {:.4}", ab.name(), report.auc);
    Ok(AblationRow {
        name: ab.name().to_string(),
        report,
    })
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<AblationTable> {
    let mut cfg = load_config(a.stage.common.config.as_deref())?;
    apply_stage_args(&mut cfg, &a.stage);
    let variants = if a.variants.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let data = data_root(&a.stage.data);
    let train = read_split(&data, "train")?;
    let eval = read_split(&data, &a.split)?;
    let shared = match &a.warmup {
        Some(p) => {
            let dir = resolve_checkpoint(p)?;
            let m = load_checkpoint(&dir)?;
            check_model(&m.cfg, &cfg.model, &dir)?;
            Some(dir)
        }
        None => None,
    };
    let out = a.stage.common.out.clone().unwrap_or_else(|| default_root().join("ablate"));
    prepare_output(&out, a.stage.common.overwrite)?;
    let names: Vec<&str> = variants.iter().map(|v| v.name()).collect();
    let mut m = RunManifest::new("ablate", a.stage.common.config.as_deref(), cfg.train.seed, &out, &cfg.to_text())
        .with("data", data.display())
        .with("variants", names.join(","))
        .with("split", &a.split);
    if let Some(d) = &shared {
        m = m.with("warmup", d.display());
    }
    write_run_files(&out, &cfg, m)?;

    // Warmups are trained on demand, one per distinct routing.
    let warm = |c: &Config| -> Result<Model> {
        if c.model.propagation == cfg.model.propagation {
            if let Some(d) = &shared {
                return load_checkpoint(d);
            }
        }
        let dir = out.join(format!("warmup-{}", c.model.propagation.name()));
        if let Ok(d) = resolve_checkpoint(&dir) {
            return load_checkpoint(&d);
        }
        let mut model = Model::new(c.model.clone())?;
        run_warmup(&mut model, &train, &c.train, Some(&dir))?;
        Ok(model)
    };
    let mut table = AblationTable {
        split: a.split.clone(),
        rows: Vec::new(),
    };
    for ab in variants {
        table.rows.push(run_ablation(ab, &cfg, &warm, &train, &eval, &out.join(ab.name()))?);
        table.write(&out)?;
    }
    print!("{}", table.to_text());
    Ok(table)
}

pub fn cmd_track(a: &TrackArgs) -> Result<PathBuf> {
    let ck = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| default_root().join("train"));
    let dir = resolve_checkpoint(&ck)?;
    let model = load_checkpoint(&dir)?;
    let run_cfg = dir.join(RUN_CONFIG);
    let run = if run_cfg.exists() { Some(Config::load(&run_cfg)?) } else { None };
    if let Some(r) = &run {
        check_model(&model.cfg, &r.model, &dir)?;
    }
    let cfg = match &a.common.config {
        Some(p) => {
            let c = Config::load(p)?;
            check_model(&model.cfg, &c.model, &dir)?;
            c
        }
        None => run.clone().unwrap_or_default(),
    };
    let localizer = match &run {
        Some(r) if model.cfg.corner_head => localizer_for(r.train.variant),
        _ => Localizer::Policy,
    };
    let data = data_root(&a.data);
    let seqs = read_split(&data, &a.split)?;
    let out = a.common.out.clone().unwrap_or_else(|| default_root().join("track"));
    prepare_output(&out, a.common.overwrite)?;
    let m = RunManifest::new("track", a.common.config.as_deref(), cfg.train.seed, &out, &cfg.to_text())
        .with("checkpoint", dir.display())
        .with("data", data.display())
        .with("split", &a.split)
        .with("dump_scoremaps", a.dump_scoremaps);
    write_run_files(&out, &cfg, m)?;
    for q in &seqs {
        let r = run_sequence(&model, q, localizer)?;
        write_results(&out, &r)?;
        if a.dump_scoremaps {
            write_score_maps(&out.join(SCOREMAP_DIR), &r, model.cfg.search_grid())?;
        }
    }
    info!("tracked {} sequences into {}", seqs.len(), out.display());
    Ok(out)
}

/// Scores `<results>/<name>.txt` for every sequence of the split. Every
/// sequence is checked before failing, and all mismatches are reported.
pub fn evaluate_results(results: &Path, seqs: &[Sequence]) -> Result<EvalReport> {
    let mut scores = Vec::new();
    let mut skipped = 0;
    let mut problems = Vec::new();
    for q in seqs {
        let p = results.join(format!("{}.txt", q.name));
        let boxes = match load_annotations(&p) {
            Ok(a) => a.boxes,
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        match evaluate_sequence(&q.name, &boxes, &q.gt, &q.absent) {
            Ok((s, k)) => {
                scores.push(s);
                skipped += k;
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Format {
            path: results.to_path_buf(),
            msg: problems.join("; "),
        });
    }
    aggregate(scores, skipped)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalReport> {
    let cfg = load_config(a.common.config.as_deref())?;
    let results = a.results.clone().unwrap_or_else(|| default_root().join("track"));
    let data = data_root(&a.data);
    let seqs = read_split(&data, &a.split)?;
    let report = evaluate_results(&results, &seqs)?;
    let out = a.common.out.clone().unwrap_or_else(|| default_root().join("eval"));
    prepare_output(&out, a.common.overwrite)?;
    let m = RunManifest::new("eval", a.common.config.as_deref(), cfg.train.seed, &out, &cfg.to_text())
        .with("results", results.display())
        .with("data", data.display())
        .with("split", &a.split);
    write_run_files(&out, &cfg, m)?;
    report.write(&out)?;
    print!("{}", report.to_kv());
    Ok(report)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(drop),
        Command::Warmup(a) => cmd_warmup(a).map(drop),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Ablate(a) => cmd_ablate(a).map(drop),
        Command::Track(a) => cmd_track(a).map(drop),
        Command::Eval(a) => cmd_eval(a).map(drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(Ablation::parse(a.name()).unwrap(), a);
        }
        assert!(Ablation::parse("nope").is_err());
    }

    #[test]
    fn prepare_output_refuses_non_empty() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_output(d.path(), false), Err(Error::OutputExists(_))));
        prepare_output(d.path(), true).unwrap();
        assert!(fs::read_dir(d.path()).unwrap().next().is_none());
    }

    #[test]
    fn missing_checkpoint_names_the_path() {
        let d = tempfile::tempdir().unwrap();
        let e = resolve_checkpoint(&d.path().join("warm")).unwrap_err();
        assert!(e.to_string().contains("warm/checkpoint/params.bin"), "{e}");
    }

    #[test]
    fn cli_parses_flags() {
        let c = Cli::try_parse_from([
            "rewardloc", "train", "--optimizer", "grpo", "--propagation", "deep-to-shallow", "--variant", "center-heatmap",
        ])
        .unwrap();
        match c.command {
            Command::Train(t) => {
                assert_eq!(t.optimizer, Some(PolicyOptimizer::Grpo));
                assert_eq!(t.propagation, Some(Propagation::DeepToShallow));
                assert_eq!(t.variant, Some(Variant::CenterHeatmap));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["rewardloc", "train", "--warmup", "x", "--no-warmup"]).is_err());
    }
}
