use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{raw_input, repatch_target, Example, Target, TaskData};
use super::metrics::{accuracy, chamfer_distance, nmse_slices};
use super::report::{config_hash, EvalReport, MetricRecord};
use super::task::{InputMode, LossKind, TaskKind, TaskSpec};
use super::timing::timing_probe;
use crate::chansim::ChannelTensor;
use crate::encoder::FoundationModel;
use crate::error::{Error, Result};
use crate::heads::{Head, PointCloud};
use crate::numerics::{Adam, AdamConfig, Gradients, Graph, ParamStore, Tensor, Var};
use crate::rng;

/// Head optimisation settings; `None` fields take the task defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    /// Measure train/inference ms per batch (non-deterministic numbers).
    pub timing: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lr: None, batch_size: None, epochs: 20, max_steps: None, timing: false }
    }
}

impl TrainOptions {
    pub fn resolve(&self, spec: &TaskSpec) -> Result<(f64, usize)> {
        let (lr, bs) = spec.task.default_optimizer();
        let (lr, bs) = (self.lr.unwrap_or(lr), self.batch_size.unwrap_or(bs));
        if bs == 0 {
            return Err(Error::InvalidConfig("train.batch_size must be at least 1".into()));
        }
        AdamConfig::with_lr(lr).validate()?;
        Ok((lr, bs))
    }
}

/// Head inputs of one split, adapted once.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub inputs: Vec<Tensor<f32>>,
    pub targets: Vec<Target>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

/// Run the input adapter of `spec` over `examples`.
///
/// Representation mode encodes every observation with `encoder` and views
/// the result as the head's input matrix.
pub fn adapt(spec: &TaskSpec, encoder: Option<&FoundationModel<f32>>, examples: &[Example]) -> Result<Split> {
    let inputs: Vec<Tensor<f32>> = examples
        .par_iter()
        .map(|ex| {
            let x = match spec.input {
                InputMode::Raw => raw_input(spec.task, &ex.observation, &spec.patch)?,
                InputMode::Representation => {
                    let model = encoder.ok_or_else(missing_checkpoint)?;
                    let rep = model.represent(&ex.observation.as_channel()?)?;
                    let n = rep.values.len();
                    if n != spec.head.input[0] * spec.head.input[1] {
                        return Err(Error::shape("adapt", format!("representation of {n} values for head input {:?}", spec.head.input)));
                    }
                    rep.values.reshape(spec.head.input.to_vec())?
                }
            };
            if x.shape() != spec.head.input {
                return Err(Error::shape("adapt", format!("{} input {:?} for head input {:?}", spec.input.name(), x.shape(), spec.head.input)));
            }
            Ok(x)
        })
        .collect::<Result<_>>()?;
    Ok(Split { inputs, targets: adapt_targets(spec, examples)? })
}

fn adapt_targets(spec: &TaskSpec, examples: &[Example]) -> Result<Vec<Target>> {
    examples
        .iter()
        .map(|e| match spec.task {
            TaskKind::Estimation => repatch_target(&e.target, &spec.patch),
            _ => Ok(e.target.clone()),
        })
        .collect()
}

pub fn prepare(spec: &TaskSpec, encoder: Option<&FoundationModel<f32>>, data: &TaskData) -> Result<PreparedData> {
    if spec.task != data.task {
        return Err(Error::Contract(format!("{} spec given {} data", spec.task.name(), data.task.name())));
    }
    if spec.input == InputMode::Representation && encoder.is_none() {
        return Err(missing_checkpoint());
    }
    Ok(PreparedData { train: adapt(spec, encoder, &data.train)?, val: adapt(spec, encoder, &data.val)?, test: adapt(spec, encoder, &data.test)? })
}

fn missing_checkpoint() -> Error {
    Error::Contract("representation mode needs a foundation checkpoint".into())
}

/// Rows of all `items` stacked into one matrix.
fn stack_rows(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let (rows, cols) = items.first().ok_or_else(|| Error::Contract("empty batch".into()))?.rows_cols();
    let mut data = Vec::with_capacity(items.len() * rows * cols);
    for t in items {
        if t.rows_cols() != (rows, cols) {
            return Err(Error::shape("stack_rows", format!("{:?} vs [{rows}, {cols}]", t.shape())));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new([items.len() * rows, cols], data)
}

/// Task loss of stacked head outputs `y` against `targets`.
///
/// Regression is the mean per-sample NMSE, classification the mean cross
/// entropy, reconstruction the mean per-sample Chamfer distance.
pub fn task_loss(g: &mut Graph<f32>, loss: LossKind, y: Var, targets: &[&Target]) -> Result<Var> {
    let b = targets.len();
    match loss {
        LossKind::RegressionNmse => {
            let mats = targets
                .iter()
                .map(|t| match t {
                    Target::Matrix(m) => Ok(m),
                    _ => Err(Error::Contract("regression loss needs matrix targets".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let stacked = stack_rows(&mats)?;
            let per = mats[0].len();
            let mut w = Vec::with_capacity(stacked.len());
            for m in &mats {
                let p = m.sum_sq() as f64;
                if p <= 0.0 {
                    return Err(Error::Contract("regression target with zero power".into()));
                }
                w.extend(std::iter::repeat_n((1.0 / (p * b as f64)) as f32, per));
            }
            let shape = stacked.shape().to_vec();
            let t = g.constant(stacked);
            let w = g.constant(Tensor::new(shape, w)?);
            g.weighted_sq_error(y, t, w)
        }
        LossKind::CrossEntropy => {
            let labels = targets
                .iter()
                .map(|t| match t {
                    Target::Label(l) => Ok(*l),
                    _ => Err(Error::Contract("cross entropy needs label targets".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            g.cross_entropy(y, labels)
        }
        LossKind::Chamfer => {
            let clouds = targets
                .iter()
                .map(|t| match t {
                    Target::Cloud(c) => Ok(c.to_tensor::<f32>()),
                    _ => Err(Error::Contract("chamfer loss needs point-cloud targets".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Tensor<f32>> = clouds.iter().collect();
            let t = g.constant(stack_rows(&refs)?);
            g.chamfer(y, t, b)
        }
    }
}

/// Name of the evaluation metric for a loss.
pub fn metric_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::RegressionNmse => "nmse",
        LossKind::CrossEntropy => "accuracy",
        LossKind::Chamfer => "chamfer",
    }
}

/// Head outputs for every input, `batch` samples at a time.
pub fn predict(head: &Head<f32>, inputs: &[Tensor<f32>], batch: usize) -> Result<Vec<Tensor<f32>>> {
    let out = head.config.output;
    let mut ys = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch.max(1)) {
        let refs: Vec<&Tensor<f32>> = chunk.iter().collect();
        let y = head.forward(&stack_rows(&refs)?, chunk.len())?;
        for s in y.data().chunks_exact(out[0] * out[1]) {
            ys.push(Tensor::new(out.to_vec(), s.to_vec())?);
        }
    }
    Ok(ys)
}

/// Metric of predictions `ys` against `targets`.
pub fn score(loss: LossKind, ys: &[Tensor<f32>], targets: &[Target]) -> Result<f64> {
    if ys.is_empty() || ys.len() != targets.len() {
        return Err(Error::Contract(format!("{} predictions for {} targets", ys.len(), targets.len())));
    }
    match loss {
        LossKind::CrossEntropy => {
            let labels: Vec<usize> = targets
                .iter()
                .map(|t| match t {
                    Target::Label(l) => Ok(*l),
                    _ => Err(Error::Contract("accuracy needs label targets".into())),
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&Tensor<f32>> = ys.iter().collect();
            accuracy(&stack_rows(&refs)?, &labels)
        }
        _ => {
            let mut s = 0.0;
            for (y, t) in ys.iter().zip(targets) {
                s += match (loss, t) {
                    (LossKind::RegressionNmse, Target::Matrix(m)) => nmse_slices(y.data(), m.data())?,
                    (LossKind::Chamfer, Target::Cloud(c)) => {
                        let p = PointCloud::new(y.data().chunks_exact(3).map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]).collect())?;
                        chamfer_distance(&p, c)?
                    }
                    _ => return Err(Error::Contract("target kind does not match the loss".into())),
                };
            }
            Ok(s / ys.len() as f64)
        }
    }
}

/// Score where lower is better (accuracy is flipped).
fn selection_score(loss: LossKind, metric: f64) -> f64 {
    if loss == LossKind::CrossEntropy {
        1.0 - metric
    } else {
        metric
    }
}

pub fn evaluate(spec: &TaskSpec, head: &Head<f32>, split: &Split, batch: usize) -> Result<f64> {
    score(spec.loss, &predict(head, &split.inputs, batch)?, &split.targets)
}

/// A trained head with its training trace.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub head: Head<f32>,
    pub losses: Vec<f64>,
    /// Validation metric after each epoch.
    pub val_history: Vec<f64>,
    /// Epoch whose parameters were kept (best validation score).
    pub best_epoch: usize,
    pub test_metric: f64,
    pub train_ms_per_batch: Option<f64>,
    pub infer_ms_per_batch: Option<f64>,
}

/// Adam over the training split; the head with the best validation score
/// is kept and scored on the test split.
pub fn fit_head(spec: &TaskSpec, data: &PreparedData, opts: &TrainOptions, seed: u64) -> Result<TrainOutcome> {
    spec.validate()?;
    let (lr, bs) = opts.resolve(spec)?;
    let n = data.train.inputs.len();
    if n == 0 || data.val.inputs.is_empty() || data.test.inputs.is_empty() {
        return Err(Error::Contract("every split needs at least one example".into()));
    }
    let mut head = Head::<f32>::new(spec.head.clone(), seed)?;
    let mut opt = Adam::new(AdamConfig::with_lr(lr))?;
    let limit = opts.max_steps.unwrap_or(usize::MAX);
    let eval_bs = bs.min(64);
    let mut losses = Vec::new();
    let mut val_history = Vec::new();
    let mut best = (f64::INFINITY, 0, head.params.clone());
    for epoch in 0..opts.epochs {
        if losses.len() >= limit {
            break;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, 0x7a00 + epoch as u64));
        for chunk in order.chunks(bs) {
            if losses.len() >= limit {
                break;
            }
            let step = losses.len();
            let loss = head_step(spec, &mut head, &mut opt, &data.train, chunk).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss(step),
                e => e,
            })?;
            losses.push(loss);
        }
        let v = evaluate(spec, &head, &data.val, eval_bs)?;
        val_history.push(v);
        let s = selection_score(spec.loss, v);
        if s < best.0 {
            best = (s, epoch, head.params.clone());
        }
    }
    if !val_history.is_empty() {
        head.params = best.2;
    }
    let test_metric = evaluate(spec, &head, &data.test, eval_bs)?;
    let (train_ms, infer_ms) = if opts.timing { probe(spec, &head, &data.train, lr, bs)? } else { (None, None) };
    Ok(TrainOutcome {
        head,
        losses,
        val_history,
        best_epoch: best.1,
        test_metric,
        train_ms_per_batch: train_ms,
        infer_ms_per_batch: infer_ms,
    })
}

fn head_step(spec: &TaskSpec, head: &mut Head<f32>, opt: &mut Adam<f32>, split: &Split, idx: &[usize]) -> Result<f64> {
    let xs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &split.inputs[i]).collect();
    let ts: Vec<&Target> = idx.iter().map(|&i| &split.targets[i]).collect();
    let mut g = Graph::new();
    let x = g.constant(stack_rows(&xs)?);
    let y = head.forward_graph(&mut g, x, idx.len())?;
    let loss = task_loss(&mut g, spec.loss, y, &ts)?;
    let value = g.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("head loss".into()));
    }
    let grads = g.backpropagate(loss, &Tensor::scalar(1.0), &head.params)?;
    opt.step(&mut head.params, &grads)?;
    Ok(value)
}

/// Median train-step and inference times on one batch, on a copy of `head`.
fn probe(spec: &TaskSpec, head: &Head<f32>, split: &Split, lr: f64, bs: usize) -> Result<(Option<f64>, Option<f64>)> {
    let idx: Vec<usize> = (0..bs.min(split.inputs.len())).collect();
    let mut copy = head.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(lr))?;
    let train = timing_probe(|| head_step(spec, &mut copy, &mut opt, split, &idx).map(|_| ()), 2, 10)?;
    let refs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &split.inputs[i]).collect();
    let x = stack_rows(&refs)?;
    let infer = timing_probe(|| head.forward(&x, idx.len()).map(|_| ()), 2, 10)?;
    Ok((Some(train.median_ms), Some(infer.median_ms)))
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    spec: &'a TaskSpec,
    train: &'a TrainOptions,
    seed: u64,
    snr_db: Option<f64>,
    velocity_kmh: Option<f64>,
    checkpoint: Option<&'a str>,
}

/// Report of a finished head for one condition and seed.
pub fn outcome_report(
    spec: &TaskSpec,
    data: &TaskData,
    opts: &TrainOptions,
    seed: u64,
    checkpoint: Option<&str>,
    out: &TrainOutcome,
) -> Result<EvalReport> {
    let c = data.condition;
    let identity = RunIdentity { spec, train: opts, seed, snr_db: c.snr_db, velocity_kmh: c.velocity_kmh, checkpoint };
    let report = EvalReport {
        records: vec![MetricRecord {
            task: spec.task,
            input_mode: spec.input,
            head: spec.head.kind,
            snr_db: c.snr_db,
            velocity_kmh: c.velocity_kmh,
            seed,
            metric_name: metric_name(spec.loss).into(),
            metric_value: out.test_metric,
            params: out.head.parameter_count(),
            train_ms_per_batch: out.train_ms_per_batch,
            infer_ms_per_batch: out.infer_ms_per_batch,
        }],
        config_hash: config_hash(&identity)?,
    };
    report.validate()?;
    Ok(report)
}

/// Adapt inputs (encoding once in representation mode), fit the head and
/// report its test metric.
pub fn train_head(
    spec: &TaskSpec,
    encoder: Option<&FoundationModel<f32>>,
    data: &TaskData,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(TrainOutcome, EvalReport)> {
    spec.validate()?;
    let prepared = prepare(spec, encoder, data)?;
    let out = fit_head(spec, &prepared, opts, seed)?;
    let ckpt = match spec.input {
        InputMode::Representation => encoder.map(|m| m.id.as_str()),
        InputMode::Raw => None,
    };
    let report = outcome_report(spec, data, opts, seed, ckpt, &out)?;
    Ok((out, report))
}

/// Joint encoder + head optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneOptions {
    pub epochs: usize,
    pub max_steps: Option<usize>,
    /// Fraction of the head learning rate used for the joint steps.
    pub lr_scale: f64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions { epochs: 2, max_steps: None, lr_scale: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutcome {
    pub baseline_val: f64,
    pub val_history: Vec<f64>,
    pub losses: Vec<f64>,
    /// Whether any epoch beat the baseline; otherwise both models are unchanged.
    pub improved: bool,
    pub report: EvalReport,
}

/// Train encoder and head together on the task loss, then re-encode and
/// evaluate. Parameters from the epoch with the best validation score are
/// kept, so validation never gets worse than before fine-tuning.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    spec: &TaskSpec,
    model: &mut FoundationModel<f32>,
    head: &mut Head<f32>,
    data: &TaskData,
    train: &TrainOptions,
    opts: &FinetuneOptions,
    seed: u64,
) -> Result<FinetuneOutcome> {
    spec.validate()?;
    if spec.loss == LossKind::CrossEntropy || !spec.finetune {
        return Err(Error::Unsupported(format!(
            "fine-tuning is applied to regression tasks only; refused for {}",
            spec.task.name()
        )));
    }
    if spec.input != InputMode::Representation {
        return Err(Error::Contract("fine-tuning needs representation-mode input".into()));
    }
    if head.config != spec.head {
        return Err(Error::Contract("head does not match the task spec".into()));
    }
    if !(opts.lr_scale > 0.0 && opts.lr_scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("finetune.lr_scale must be positive, got {}", opts.lr_scale)));
    }
    let (lr, bs) = train.resolve(spec)?;
    let eval_bs = bs.min(64);
    let channels = |xs: &[Example]| xs.iter().map(|e| e.observation.as_channel()).collect::<Result<Vec<_>>>();
    let train_ch = channels(&data.train)?;
    let adapted = adapt_targets(spec, &data.train)?;
    let targets: Vec<&Target> = adapted.iter().collect();

    let baseline_val = evaluate(spec, head, &adapt(spec, Some(model), &data.val)?, eval_bs)?;
    let mut best = (selection_score(spec.loss, baseline_val), model.params.clone(), head.params.clone());
    let mut improved = false;
    let cfg = AdamConfig::with_lr(lr * opts.lr_scale);
    let (mut enc_opt, mut head_opt) = (Adam::new(cfg)?, Adam::new(cfg)?);
    let limit = opts.max_steps.unwrap_or(usize::MAX);
    let mut losses = Vec::new();
    let mut val_history = Vec::new();
    for epoch in 0..opts.epochs {
        if losses.len() >= limit {
            break;
        }
        let mut order: Vec<usize> = (0..train_ch.len()).collect();
        order.shuffle(&mut rng::stream(seed, 0xf100 + epoch as u64));
        for chunk in order.chunks(bs) {
            if losses.len() >= limit {
                break;
            }
            let batch: Vec<&ChannelTensor> = chunk.iter().map(|&i| &train_ch[i]).collect();
            let ts: Vec<&Target> = chunk.iter().map(|&i| targets[i]).collect();
            let step = losses.len();
            let loss = joint_step(spec, model, head, (&mut enc_opt, &mut head_opt), &batch, &ts).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss(step),
                e => e,
            })?;
            losses.push(loss);
        }
        let v = evaluate(spec, head, &adapt(spec, Some(model), &data.val)?, eval_bs)?;
        val_history.push(v);
        let s = selection_score(spec.loss, v);
        if s < best.0 {
            best = (s, model.params.clone(), head.params.clone());
            improved = true;
        }
    }
    if !losses.is_empty() {
        model.params = best.1;
        head.params = best.2;
        model.refresh_id();
    }
    let test = evaluate(spec, head, &adapt(spec, Some(model), &data.test)?, eval_bs)?;
    let out = TrainOutcome {
        head: head.clone(),
        losses: losses.clone(),
        val_history: val_history.clone(),
        best_epoch: 0,
        test_metric: test,
        train_ms_per_batch: None,
        infer_ms_per_batch: None,
    };
    let report = outcome_report(spec, data, train, seed, Some(&model.id), &out)?;
    Ok(FinetuneOutcome { baseline_val, val_history, losses, improved, report })
}

fn joint_step(
    spec: &TaskSpec,
    model: &mut FoundationModel<f32>,
    head: &mut Head<f32>,
    opts: (&mut Adam<f32>, &mut Adam<f32>),
    batch: &[&ChannelTensor],
    targets: &[&Target],
) -> Result<f64> {
    let b = batch.len();
    let mut g = Graph::new();
    let (mats, stacked) = model.stack_patches(batch)?;
    let x = g.constant(stacked);
    let tokens = model.embed_graph(&mut g, x, &mats[0].positions, b, None)?;
    let pass = model.encode_graph(&mut g, tokens, &mats[0].positions, b)?;
    let input = g.reshape(pass.hidden, [b * spec.head.input[0], spec.head.input[1]])?;
    let y = head.forward_graph(&mut g, input, b)?;
    let loss = task_loss(&mut g, spec.loss, y, targets)?;
    let value = g.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("fine-tuning loss".into()));
    }
    let grads = g.bound_param_grads(loss, &Tensor::scalar(1.0))?;
    let (ge, gh) = (restrict(&grads, &model.params), restrict(&grads, &head.params));
    opts.0.step(&mut model.params, &ge)?;
    opts.1.step(&mut head.params, &gh)?;
    Ok(value)
}

fn restrict(grads: &Gradients<f32>, store: &ParamStore<f32>) -> Gradients<f32> {
    Gradients { by_name: grads.by_name.iter().filter(|(k, _)| store.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::pipeline::data::Condition;

    fn tiny_estimation() -> (TaskSpec, TaskData) {
        let spec = TaskSpec::default_for(TaskKind::Estimation, InputMode::Raw, None, &EncoderConfig::desk()).unwrap();
        let mut spec = spec;
        spec.head = spec.head.with_width(8).with_layers(1);
        let data = TaskData::generate(TaskKind::Estimation, Condition::snr(5.0), [6, 2, 2], 1).unwrap();
        (spec, data)
    }

    #[test]
    fn same_seed_same_metrics() {
        let (spec, data) = tiny_estimation();
        let opts = TrainOptions { epochs: 2, batch_size: Some(3), lr: Some(1e-3), ..Default::default() };
        let (a, ra) = train_head(&spec, None, &data, &opts, 4).unwrap();
        let (b, rb) = train_head(&spec, None, &data, &opts, 4).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(ra, rb);
        assert_eq!(a.losses.len(), 4);
        assert_eq!(ra.records[0].metric_name, "nmse");
    }

    #[test]
    fn representation_mode_requires_checkpoint() {
        let (_, data) = tiny_estimation();
        let spec = TaskSpec::default_for(TaskKind::Estimation, InputMode::Representation, None, &EncoderConfig::desk()).unwrap();
        assert!(train_head(&spec, None, &data, &TrainOptions::default(), 0).is_err());
    }

    #[test]
    fn table_defaults() {
        let desk = EncoderConfig::desk();
        let est = TaskSpec::default_for(TaskKind::Estimation, InputMode::Raw, None, &desk).unwrap();
        assert_eq!(TrainOptions::default().resolve(&est).unwrap(), (1e-4, 512));
        let har = TaskSpec::default_for(TaskKind::Har, InputMode::Raw, None, &EncoderConfig::activity()).unwrap();
        assert_eq!(TrainOptions::default().resolve(&har).unwrap(), (1e-3, 16));
    }

    #[test]
    fn regression_loss_matches_mean_nmse() {
        let t1 = Tensor::new([2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let t2 = Tensor::new([2, 2], vec![2.0f32, 2.0, 0.0, 0.0]).unwrap();
        let y = Tensor::new([4, 2], vec![0.5f32, 0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.0]).unwrap();
        let mut g = Graph::new();
        let yv = g.constant(y.clone());
        let ts = [Target::Matrix(t1.clone()), Target::Matrix(t2.clone())];
        let refs: Vec<&Target> = ts.iter().collect();
        let l = task_loss(&mut g, LossKind::RegressionNmse, yv, &refs).unwrap();
        let want = (nmse_slices(&y.data()[..4], t1.data()).unwrap() + nmse_slices(&y.data()[4..], t2.data()).unwrap()) / 2.0;
        assert!((g.value(l).data()[0] as f64 - want).abs() < 1e-7);
    }
}
