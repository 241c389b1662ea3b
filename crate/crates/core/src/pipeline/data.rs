use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::task::{activity_raw_image, TaskKind, ACTIVITY_RAW_POOL, RECONSTRUCTION_POINTS};
use crate::chansim::{
    activity_sample, corpus_sample, generate_scene, ls_estimate_tensor, prediction_pair, synthesize_channel,
    ActivitySample, ChannelConfig, ChannelTensor, CorpusConfig, PredictionConfig, SceneBounds, ACTIVITY_LINKS,
};
use crate::error::{Error, Result};
use crate::heads::PointCloud;
use crate::numerics::Tensor;
use crate::rng;
use crate::tokenizer::{partition_patches, reassemble_patches, PatchSpec};

/// Pilot length used by the estimation task.
pub const PILOT_LENGTH: usize = 64;

/// Operating point of one experiment cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub snr_db: Option<f64>,
    pub velocity_kmh: Option<f64>,
}

impl Condition {
    pub fn snr(snr_db: f64) -> Self {
        Condition { snr_db: Some(snr_db), velocity_kmh: None }
    }
}

/// What a head is given before any input adapter runs.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Channel(ChannelTensor),
    Activity(ActivitySample),
}

impl Observation {
    pub fn as_channel(&self) -> Result<ChannelTensor> {
        match self {
            Observation::Channel(h) => Ok(h.clone()),
            Observation::Activity(a) => a.to_channel_tensor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Regression target laid out as the head's output matrix.
    Matrix(Tensor<f32>),
    Label(usize),
    Cloud(PointCloud),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub observation: Observation,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub task: TaskKind,
    pub condition: Condition,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

/// Reference split sizes for each task.
pub fn reference_split(task: TaskKind) -> [usize; 3] {
    match task {
        TaskKind::Estimation => [60_000, 10_000, 20_000],
        TaskKind::Prediction => [160_000, 32_000, 128_000],
        TaskKind::Har => [800, 200, 200],
        TaskKind::Reconstruction => [800, 100, 100],
    }
}

/// Reference split scaled by `scale`, each part at least one example.
pub fn split_sizes(task: TaskKind, scale: f64) -> Result<[usize; 3]> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidConfig(format!("data scale {scale} outside (0, 1]")));
    }
    Ok(reference_split(task).map(|n| ((n as f64 * scale).round() as usize).max(1)))
}

impl TaskData {
    /// Deterministic train/val/test examples for `task` under `condition`.
    /// Example `i` of the concatenated splits depends only on `(seed, i)`.
    pub fn generate(task: TaskKind, condition: Condition, sizes: [usize; 3], seed: u64) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        let all: Vec<Example> = (0..total).into_par_iter().map(|i| example(task, condition, seed, i)).collect::<Result<_>>()?;
        let mut it = all.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
        let (train, val, test) = (take(sizes[0]), take(sizes[1]), take(sizes[2]));
        Ok(TaskData { task, condition, train, val, test })
    }
}

/// The estimation target patches for the given patch spec.
fn patch_target(h: &ChannelTensor, patch: &PatchSpec) -> Result<Tensor<f32>> {
    Ok(partition_patches(h, patch)?.values)
}

/// An estimation target (stored on the communication grid) on the grid of `patch`.
pub fn repatch_target(target: &Target, patch: &PatchSpec) -> Result<Target> {
    let stored = PatchSpec::communication();
    match target {
        Target::Matrix(m) if (patch.time, patch.space, patch.freq) != (stored.time, stored.space, stored.freq) => {
            let (t, s, f) = super::task::estimation_shape();
            let grid = partition_patches(&ChannelTensor::from_values(Tensor::zeros([t, s, f, 2]))?, &stored)?;
            let h = ChannelTensor::from_values(reassemble_patches(m, &grid.positions, &stored, (t, s, f))?)?;
            Ok(Target::Matrix(patch_target(&h, patch)?))
        }
        t => Ok(t.clone()),
    }
}

fn example(task: TaskKind, c: Condition, seed: u64, i: usize) -> Result<Example> {
    let s = rng::mix(seed, i as u64);
    match task {
        TaskKind::Estimation => {
            let v = c.velocity_kmh.unwrap_or(10.0);
            let cfg = CorpusConfig { velocity_kmh: (v, v), ..CorpusConfig::default() };
            let mut truth = corpus_sample(seed ^ 0xe57, i, &cfg)?;
            truth.normalize_power();
            let ls = ls_estimate_tensor(&truth, PILOT_LENGTH, c.snr_db, s)?;
            let target = Target::Matrix(patch_target(&truth, &PatchSpec::communication())?);
            Ok(Example { observation: Observation::Channel(ls), target })
        }
        TaskKind::Prediction => {
            let v = c.velocity_kmh.unwrap_or(40.0);
            let cfg = PredictionConfig { velocity_kmh: (v, v), snr_db: c.snr_db, ..PredictionConfig::default() };
            let mut p = prediction_pair(seed ^ 0x9ed, i, &cfg)?;
            let k = p.history.normalize_power();
            p.future.values_mut().data_mut().iter_mut().for_each(|x| *x = (*x as f64 * k) as f32);
            let (t, sp, f) = p.future.dims();
            let target = Target::Matrix(p.future.values().clone().reshape([t, sp * f * 2])?);
            Ok(Example { observation: Observation::Channel(p.history), target })
        }
        TaskKind::Har => {
            let a = activity_sample(seed ^ 0xa11, i);
            let label = a.label;
            Ok(Example { observation: Observation::Activity(a), target: Target::Label(label) })
        }
        TaskKind::Reconstruction => {
            let bounds = SceneBounds::default();
            let scene = generate_scene(s, RECONSTRUCTION_POINTS, bounds)?;
            let mut h = synthesize_channel(&scene, &ChannelConfig::reconstruction(), s)?;
            h.normalize_power();
            let cloud = PointCloud::new(scene.scatterers.clone())?;
            let obs = match c.snr_db {
                Some(snr) => crate::chansim::add_noise_at_snr(&h, snr, s)?,
                None => h,
            };
            Ok(Example { observation: Observation::Channel(obs), target: Target::Cloud(cloud) })
        }
    }
}

/// Head input built directly from the observation.
///
/// Channels become their raw patch matrix (estimation, reconstruction) or
/// one row per slot (prediction); activity amplitudes become
/// [`activity_image`].
pub fn raw_input(task: TaskKind, obs: &Observation, patch: &PatchSpec) -> Result<Tensor<f32>> {
    match (task, obs) {
        (TaskKind::Estimation | TaskKind::Reconstruction, Observation::Channel(h)) => patch_target(h, patch),
        (TaskKind::Prediction, Observation::Channel(h)) => {
            let (t, s, f) = h.dims();
            h.values().clone().reshape([t, s * f * 2])
        }
        (TaskKind::Har, Observation::Activity(a)) => activity_image(a),
        _ => Err(Error::Contract(format!("{} task cannot use this observation", task.name()))),
    }
}

/// `[links, subcarriers, time]` amplitudes pooled to `[(h*w), links]` rows.
pub fn pooled_activity(a: &ActivitySample) -> Result<Tensor<f32>> {
    let shape = a.amplitude.shape();
    let (links, subs, time) = (shape[0], shape[1], shape[2]);
    let (ph, pw) = ACTIVITY_RAW_POOL;
    let (h, w) = activity_raw_image();
    if links != ACTIVITY_LINKS || subs / ph != h || time / pw != w {
        return Err(Error::shape("pooled_activity", format!("{shape:?}")));
    }
    let src = a.amplitude.data();
    let scale = 1.0 / (ph * pw) as f32;
    let mut out = vec![0f32; h * w * links];
    for l in 0..links {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for dy in 0..ph {
                    let row = &src[(l * subs + y * ph + dy) * time + x * pw..][..pw];
                    acc += row.iter().sum::<f32>();
                }
                out[(y * w + x) * links + l] = acc * scale;
            }
        }
    }
    Tensor::new([h * w, links], out)
}

/// [`pooled_activity`] with each (subcarrier row, link) centred over time and
/// the whole image scaled to unit variance.
pub fn activity_image(a: &ActivitySample) -> Result<Tensor<f32>> {
    let mut p = pooled_activity(a)?;
    let (h, w) = activity_raw_image();
    let links = p.shape()[1];
    let d = p.data_mut();
    for y in 0..h {
        for l in 0..links {
            let at = |x: usize| (y * w + x) * links + l;
            let mean = (0..w).map(|x| d[at(x)] as f64).sum::<f64>() / w as f64;
            (0..w).for_each(|x| d[at(x)] -= mean as f32);
        }
    }
    let sd = (d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    if sd > 0.0 {
        d.iter_mut().for_each(|v| *v = (*v as f64 / sd) as f32);
    }
    Ok(p)
}
