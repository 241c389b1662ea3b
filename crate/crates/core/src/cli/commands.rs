use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::dataset::{load_dataset, save_dataset, DType, Dataset};
use crate::chansim::{generate_corpus, ActivitySample, ChannelTensor, CorpusConfig};
use crate::encoder::{EncoderConfig, FoundationModel};
use crate::error::{Error, Result};
use crate::heads::{Head, PointCloud};
use crate::numerics::Tensor;
use crate::pipeline::{
    evaluate, finetune, metric_name, prepare, run_experiment, split_sizes, train_head, Condition, EvalReport, Example,
    InputMode, LossKind, MetricRecord, Observation, Target, TaskData, TaskKind, TaskSpec,
};

#[derive(Debug, Parser)]
#[command(name = "csifm", version, about = "Channel foundation model: simulate, pretrain, embed, train heads, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// corpus | estimation | prediction | har | reconstruction
    #[arg(long, global = true)]
    pub task: Option<String>,
    /// raw | rep
    #[arg(long, global = true)]
    pub input: Option<String>,
    /// CSV report path.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate a pretraining corpus or task splits.
    GenData,
    /// Masked-reconstruction pretraining; writes an encoder checkpoint.
    Pretrain,
    /// Encode every sample of a dataset into representation matrices.
    Embed,
    /// Train a downstream head on task splits.
    TrainHead,
    /// Jointly fine-tune encoder and head on a regression task.
    Finetune,
    /// Evaluate a trained head, or run the configured experiment sweep.
    Eval,
}

/// Stored in every checkpoint as the `__config__` record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    config_hash: String,
    encoder: Option<EncoderConfig>,
    spec: Option<TaskSpec>,
}

const CONFIG_RECORD: &str = "__config__";

struct Ctx {
    cfg: RunConfig,
    hash: String,
    cli: Cli,
}

impl Ctx {
    fn path(&self, flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| fallback.clone())
            .ok_or_else(|| Error::InvalidConfig(format!("missing --{name} (or paths.{name} in the config)")))
    }
    fn out(&self) -> Result<PathBuf> {
        self.path(&self.cli.out, &self.cfg.paths.out, "out")
    }
    fn data(&self) -> Result<PathBuf> {
        self.path(&self.cli.data, &self.cfg.paths.data, "data")
    }
    fn ckpt(&self) -> Option<PathBuf> {
        self.cli.ckpt.clone().or_else(|| self.cfg.paths.ckpt.clone())
    }
    fn report(&self) -> Option<PathBuf> {
        self.cli.report.clone().or_else(|| self.cfg.paths.report.clone())
    }
    fn task(&self) -> TaskKind {
        self.cfg.task.kind
    }
}

/// Execute one command; returns the human-readable summary lines.
pub fn run(cli: Cli) -> Result<Vec<String>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let corpus = cli.task.as_deref() == Some("corpus");
    if let Some(t) = cli.task.as_deref().filter(|_| !corpus) {
        cfg.task.kind = TaskKind::parse(t)?;
    }
    if let Some(i) = &cli.input {
        cfg.task.input = InputMode::parse(i)?;
    }
    cfg.validate()?;
    let hash = cfg.hash()?;
    let command = cli.command;
    let ctx = Ctx { cfg, hash, cli };
    match command {
        Command::GenData if corpus => gen_corpus(&ctx),
        Command::GenData => gen_task_data(&ctx),
        Command::Pretrain => pretrain(&ctx),
        Command::Embed => embed(&ctx),
        Command::TrainHead => cmd_train_head(&ctx),
        Command::Finetune => cmd_finetune(&ctx),
        Command::Eval => eval(&ctx),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn base_meta(ctx: &Ctx, kind: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("config_hash".into(), ctx.hash.clone()),
        ("content".into(), kind.into()),
        ("seed".into(), ctx.cfg.seed.to_string()),
    ])
}

fn gen_corpus(ctx: &Ctx) -> Result<Vec<String>> {
    let out = ctx.out()?;
    create_dir(&out)?;
    let cfg = CorpusConfig { snr_db: ctx.cfg.simulator.corpus_snr_db, ..CorpusConfig::default() };
    let hs = generate_corpus(ctx.cfg.seed, ctx.cfg.simulator.corpus_size, &cfg)?;
    let (t, s, f) = hs[0].dims();
    let ds = Dataset::new(DType::Complex, [t, s, f], hs.into_iter().map(ChannelTensor::into_values).collect())?;
    let path = out.join("corpus.wgct");
    let mut meta = base_meta(ctx, "corpus");
    meta.insert("subcarriers".into(), f.to_string());
    meta.insert("spatial".into(), s.to_string());
    save_dataset(&path, &ds, &meta)?;
    Ok(vec![format!("wrote {} corpus channels [{t}, {s}, {f}] to {}", ds.samples.len(), path.display())])
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn gen_task_data(ctx: &Ctx) -> Result<Vec<String>> {
    let out = ctx.out()?;
    create_dir(&out)?;
    let task = ctx.task();
    let sim = &ctx.cfg.simulator;
    let cond = Condition { snr_db: sim.snr_db, velocity_kmh: sim.velocity_kmh };
    let data = TaskData::generate(task, cond, split_sizes(task, sim.data_scale)?, ctx.cfg.seed)?;
    let mut lines = Vec::new();
    for (name, split) in SPLITS.iter().zip([&data.train, &data.val, &data.test]) {
        let mut meta = base_meta(ctx, "observations");
        meta.insert("task".into(), task.name().into());
        meta.insert("split".into(), (*name).into());
        if let Some(s) = cond.snr_db {
            meta.insert("snr_db".into(), s.to_string());
        }
        if let Some(v) = cond.velocity_kmh {
            meta.insert("velocity_kmh".into(), v.to_string());
        }
        let obs = observations_dataset(split)?;
        save_dataset(&out.join(format!("{name}.wgct")), &obs, &meta)?;
        meta.insert("content".into(), "targets".into());
        save_dataset(&out.join(format!("{name}.targets.wgct")), &targets_dataset(split)?, &meta)?;
        lines.push(format!("{name}: {} {} examples, sample dims {:?}", split.len(), task.name(), obs.dims));
    }
    lines.push(format!("wrote {}", out.display()));
    Ok(lines)
}

fn observations_dataset(split: &[Example]) -> Result<Dataset> {
    let first = split.first().ok_or_else(|| Error::Contract("empty split".into()))?;
    match &first.observation {
        Observation::Channel(h) => {
            let (t, s, f) = h.dims();
            let samples = split
                .iter()
                .map(|e| match &e.observation {
                    Observation::Channel(h) => Ok(h.values().clone()),
                    Observation::Activity(_) => Err(Error::Contract("mixed observation kinds".into())),
                })
                .collect::<Result<_>>()?;
            Dataset::new(DType::Complex, [t, s, f], samples)
        }
        Observation::Activity(a) => {
            let d = a.amplitude.shape();
            let samples = split
                .iter()
                .map(|e| match &e.observation {
                    Observation::Activity(a) => Ok(a.amplitude.clone()),
                    Observation::Channel(_) => Err(Error::Contract("mixed observation kinds".into())),
                })
                .collect::<Result<_>>()?;
            Dataset::new(DType::Real, [d[0], d[1], d[2]], samples)
        }
    }
}

/// Targets as real samples: matrices `[rows, cols, 1]`, labels `[1, 1, 1]`,
/// point clouds `[points, 3, 1]`.
fn targets_dataset(split: &[Example]) -> Result<Dataset> {
    let samples: Vec<Tensor<f32>> = split
        .iter()
        .map(|e| match &e.target {
            Target::Matrix(m) => {
                let (r, c) = m.rows_cols();
                m.clone().reshape([r, c, 1])
            }
            Target::Label(l) => Tensor::new([1, 1, 1], vec![*l as f32]),
            Target::Cloud(c) => c.to_tensor::<f32>().reshape([c.len(), 3, 1]),
        })
        .collect::<Result<_>>()?;
    let s = samples.first().ok_or_else(|| Error::Contract("empty split".into()))?.shape().to_vec();
    Dataset::new(DType::Real, [s[0], s[1], s[2]], samples)
}

/// Dataset samples as observations: complex samples are channels, real
/// `[links, subcarriers, time]` samples are activity amplitudes.
fn observations(ds: &Dataset) -> Result<Vec<Observation>> {
    ds.samples
        .iter()
        .map(|s| match ds.dtype {
            DType::Complex => Ok(Observation::Channel(ChannelTensor::from_values(s.clone())?)),
            DType::Real => Ok(Observation::Activity(ActivitySample::new(s.clone(), 0)?)),
        })
        .collect()
}

fn targets(task: TaskKind, ds: &Dataset) -> Result<Vec<Target>> {
    ds.samples
        .iter()
        .map(|s| {
            let sh = s.shape();
            Ok(match task.loss() {
                LossKind::RegressionNmse => Target::Matrix(s.clone().reshape([sh[0], sh[1]])?),
                LossKind::CrossEntropy => Target::Label(s.data()[0] as usize),
                LossKind::Chamfer => {
                    Target::Cloud(PointCloud::new(s.data().chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect())?)
                }
            })
        })
        .collect()
}

fn load_task_data(dir: &Path, task: TaskKind) -> Result<TaskData> {
    let mut splits = Vec::new();
    let mut condition = Condition::default();
    for name in SPLITS {
        let (obs, meta) = load_dataset(&dir.join(format!("{name}.wgct")))?;
        let (tgt, _) = load_dataset(&dir.join(format!("{name}.targets.wgct")))?;
        if meta.get("task").map(String::as_str) != Some(task.name()) {
            return Err(Error::Contract(format!("{} holds {:?} data, not {}", dir.display(), meta.get("task"), task.name())));
        }
        let num = |k: &str| meta.get(k).map(|v| v.parse::<f64>()).transpose();
        condition = Condition {
            snr_db: num("snr_db").map_err(|_| Error::Contract("bad snr_db in manifest".into()))?,
            velocity_kmh: num("velocity_kmh").map_err(|_| Error::Contract("bad velocity_kmh in manifest".into()))?,
        };
        let o = observations(&obs)?;
        let t = targets(task, &tgt)?;
        if o.len() != t.len() {
            return Err(Error::Contract(format!("{name}: {} observations vs {} targets", o.len(), t.len())));
        }
        splits.push(o.into_iter().zip(t).map(|(observation, target)| Example { observation, target }).collect::<Vec<_>>());
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(TaskData { task, condition, train, val, test })
}

/// The dataset behind `--data`: a file, or `corpus.wgct` / `train.wgct` in a directory.
fn data_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        let c = p.join("corpus.wgct");
        if c.exists() {
            c
        } else {
            p.join("train.wgct")
        }
    } else {
        p.to_path_buf()
    }
}

fn save_model(path: &Path, ctx: &Ctx, encoder: Option<&FoundationModel<f32>>, head: Option<(&TaskSpec, &Head<f32>)>) -> Result<()> {
    let mut ck = Checkpoint::default();
    let meta = CheckpointMeta {
        config_hash: ctx.hash.clone(),
        encoder: encoder.map(|m| m.config.clone()),
        spec: head.map(|(s, _)| s.clone()),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::InvalidConfig(format!("cannot serialise checkpoint meta: {e}")))?;
    ck.push_text(CONFIG_RECORD, &text)?;
    if let Some(m) = encoder {
        ck.extend_from(&m.params)?;
    }
    if let Some((_, h)) = head {
        ck.extend_from(&h.params)?;
    }
    save_checkpoint(path, &ck)
}

struct Loaded {
    encoder: Option<FoundationModel<f32>>,
    head: Option<(TaskSpec, Head<f32>)>,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let ck = load_checkpoint(path)?;
    let text = ck.text(CONFIG_RECORD)?.ok_or_else(|| Error::Contract(format!("{} has no {CONFIG_RECORD} record", path.display())))?;
    let meta: CheckpointMeta = toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("checkpoint config: {}", e.message())))?;
    let encoder = match meta.encoder {
        Some(cfg) => Some(FoundationModel::from_params(cfg, ck.store(|n| n != CONFIG_RECORD && !n.starts_with("head."))?)?),
        None => None,
    };
    let head = match meta.spec {
        Some(spec) => {
            let h = Head::from_params(spec.head.clone(), ck.store(|n| n.starts_with("head."))?)?;
            Some((spec, h))
        }
        None => None,
    };
    Ok(Loaded { encoder, head })
}

fn require_encoder(ctx: &Ctx) -> Result<FoundationModel<f32>> {
    let p = ctx.ckpt().ok_or_else(|| Error::InvalidConfig("missing --ckpt".into()))?;
    load_model(&p)?.encoder.ok_or_else(|| Error::Contract(format!("{} holds no encoder", p.display())))
}

fn pretrain(ctx: &Ctx) -> Result<Vec<String>> {
    let (ds, _) = load_dataset(&data_file(&ctx.data()?))?;
    let corpus = observations(&ds)?.iter().map(Observation::as_channel).collect::<Result<Vec<_>>>()?;
    let cfg = match (&ctx.cfg.encoder, ds.dtype) {
        (Some(e), _) => e.clone(),
        (None, DType::Real) => EncoderConfig::activity(),
        (None, DType::Complex) => EncoderConfig::desk(),
    };
    let out = ctx.out()?;
    let mut model = FoundationModel::<f32>::new(cfg, ctx.cfg.seed)?;
    let report = model.pretrain(&corpus, &ctx.cfg.pretrain_options(), |_, m| save_model(&out, ctx, Some(m), None))?;
    let tail = &report.losses[report.losses.len().saturating_sub(50)..];
    let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    Ok(vec![
        format!("pretrained {} parameters for {} steps ({} epochs)", model.parameter_count(), report.losses.len(), report.epochs_completed),
        format!("final masked nmse {mean:.6}, checkpoint {} ({})", out.display(), model.id),
    ])
}

fn embed(ctx: &Ctx) -> Result<Vec<String>> {
    let model = require_encoder(ctx)?;
    let (ds, _) = load_dataset(&data_file(&ctx.data()?))?;
    let hs = observations(&ds)?.iter().map(Observation::as_channel).collect::<Result<Vec<_>>>()?;
    let reps = model.represent_all(&hs)?;
    let (n, d) = (reps[0].tokens(), reps[0].width());
    let samples = reps.into_iter().map(|r| r.values.reshape([n, d, 1])).collect::<Result<_>>()?;
    let out = Dataset::new(DType::Real, [n, d, 1], samples)?;
    let mut meta = base_meta(ctx, "representations");
    meta.insert("checkpoint_id".into(), model.id.clone());
    let path = ctx.out()?;
    save_dataset(&path, &out, &meta)?;
    Ok(vec![format!("wrote {} representations of {n}x{d} to {}", out.samples.len(), path.display())])
}

fn task_spec(ctx: &Ctx, input: InputMode, encoder: Option<&FoundationModel<f32>>) -> Result<TaskSpec> {
    let t = &ctx.cfg.task;
    let enc = encoder.map(|m| m.config.clone()).unwrap_or_else(|| ctx.cfg.encoder_for(t.kind));
    let mut spec = TaskSpec::default_for(t.kind, input, t.head, &enc)?;
    if let Some(w) = t.head_width {
        spec.head = spec.head.with_width(w);
        spec.validate()?;
    }
    Ok(spec)
}

fn write_report(ctx: &Ctx, mut report: EvalReport) -> Result<Vec<String>> {
    report.config_hash = ctx.hash.clone();
    let mut lines: Vec<String> =
        report.records.iter().map(|r| format!("{} {} {}: {} = {:.6}", r.task.name(), r.input_mode.name(), r.head.name(), r.metric_name, r.metric_value)).collect();
    if let Some(p) = ctx.report() {
        report.write(&p)?;
        lines.push(format!("report {}", p.display()));
    }
    Ok(lines)
}

fn cmd_train_head(ctx: &Ctx) -> Result<Vec<String>> {
    let data = load_task_data(&ctx.data()?, ctx.task())?;
    let encoder = match ctx.cfg.task.input {
        InputMode::Representation => Some(require_encoder(ctx)?),
        InputMode::Raw => None,
    };
    let spec = task_spec(ctx, ctx.cfg.task.input, encoder.as_ref())?;
    let (out, report) = train_head(&spec, encoder.as_ref(), &data, &ctx.cfg.train, ctx.cfg.seed)?;
    let path = ctx.out()?;
    save_model(&path, ctx, encoder.as_ref(), Some((&spec, &out.head)))?;
    let mut lines = vec![format!("trained {} head ({} parameters) for {} steps", spec.head.kind.name(), out.head.parameter_count(), out.losses.len())];
    lines.extend(write_report(ctx, report)?);
    lines.push(format!("checkpoint {}", path.display()));
    Ok(lines)
}

fn cmd_finetune(ctx: &Ctx) -> Result<Vec<String>> {
    let task = ctx.task();
    if task.loss() == LossKind::CrossEntropy {
        return Err(Error::Unsupported(format!("fine-tuning applies to regression tasks only; {} is a classification task", task.name())));
    }
    let ckpt = ctx.ckpt().ok_or_else(|| Error::InvalidConfig("missing --ckpt".into()))?;
    let loaded = load_model(&ckpt)?;
    let mut model = loaded.encoder.ok_or_else(|| Error::Contract(format!("{} holds no encoder", ckpt.display())))?;
    let data = load_task_data(&ctx.data()?, task)?;
    let (spec, mut head) = match loaded.head {
        Some((spec, head)) if spec.task == task => (spec, head),
        _ => {
            let spec = task_spec(ctx, InputMode::Representation, Some(&model))?;
            let (out, _) = train_head(&spec, Some(&model), &data, &ctx.cfg.train, ctx.cfg.seed)?;
            (spec, out.head)
        }
    };
    let r = finetune(&spec, &mut model, &mut head, &data, &ctx.cfg.train, &ctx.cfg.finetune, ctx.cfg.seed)?;
    let path = ctx.out()?;
    save_model(&path, ctx, Some(&model), Some((&spec, &head)))?;
    let mut lines = vec![format!(
        "fine-tuned {} steps; validation {} {:.6} -> {:.6}{}",
        r.losses.len(),
        metric_name(spec.loss),
        r.baseline_val,
        r.val_history.iter().copied().fold(r.baseline_val, f64::min),
        if r.improved { "" } else { " (kept original weights)" }
    )];
    lines.extend(write_report(ctx, r.report)?);
    lines.push(format!("checkpoint {}", path.display()));
    Ok(lines)
}

fn eval(ctx: &Ctx) -> Result<Vec<String>> {
    if let (Some(m), None) = (&ctx.cfg.experiment, &ctx.cli.data) {
        let encoder = match ctx.ckpt() {
            Some(p) => load_model(&p)?.encoder,
            None => None,
        };
        let report = run_experiment(m, encoder.as_ref())?;
        return write_report(ctx, report);
    }
    let ckpt = ctx.ckpt().ok_or_else(|| Error::InvalidConfig("missing --ckpt (or an [experiment] section)".into()))?;
    let loaded = load_model(&ckpt)?;
    let (spec, head) = loaded.head.ok_or_else(|| Error::Contract(format!("{} holds no head", ckpt.display())))?;
    let data = load_task_data(&ctx.data()?, spec.task)?;
    let prepared = prepare(&spec, loaded.encoder.as_ref(), &data)?;
    let (_, bs) = ctx.cfg.train.resolve(&spec)?;
    let value = evaluate(&spec, &head, &prepared.test, bs.min(64))?;
    let report = EvalReport {
        records: vec![MetricRecord {
            task: spec.task,
            input_mode: spec.input,
            head: spec.head.kind,
            snr_db: data.condition.snr_db,
            velocity_kmh: data.condition.velocity_kmh,
            seed: ctx.cfg.seed,
            metric_name: metric_name(spec.loss).into(),
            metric_value: value,
            params: head.parameter_count(),
            train_ms_per_batch: None,
            infer_ms_per_batch: None,
        }],
        config_hash: String::new(),
    };
    write_report(ctx, report)
}
