use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FoundationModel;
use crate::chansim::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, Graph, Scalar, Tensor, Var};
use crate::rng;
use crate::tokenizer::{partition_patches, plan_mask, MaskPlan};

/// Per-element power floor used when normalising a patch error.
const POWER_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions { epochs: 1, batch_size: 4, lr: 1e-3, seed: 0, max_steps: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainReport {
    /// One entry per optimizer step.
    pub losses: Vec<f64>,
    pub epochs_completed: usize,
}

impl<T: Scalar> FoundationModel<T> {
    /// Mask plans for a batch: sample `i` uses `mix(seed, i)`.
    pub fn plan_batch(&self, batch: &[&ChannelTensor], seed: u64) -> Result<Vec<MaskPlan>> {
        let first = batch.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let n = self.config.patch.token_count(first.dims())?;
        batch
            .iter()
            .enumerate()
            .map(|(i, _)| plan_mask(n, self.config.mask_ratio, rng::mix(seed, i as u64)))
            .collect()
    }

    /// Mean per-patch NMSE over masked tokens, recorded on `g`.
    ///
    /// The encoder sees `inputs`; errors are measured against `targets`.
    /// Returns `None` when no token is masked.
    pub fn masked_loss_graph(
        &self,
        g: &mut Graph<T>,
        inputs: &[&ChannelTensor],
        targets: &[&ChannelTensor],
        plans: &[MaskPlan],
        dropout: Option<(f64, u64)>,
    ) -> Result<Option<Var>> {
        if inputs.len() != targets.len() {
            return Err(Error::Contract(format!("{} inputs vs {} targets", inputs.len(), targets.len())));
        }
        let masked_total: usize = plans.iter().map(|p| p.masked.len()).sum();
        if masked_total == 0 {
            return Ok(None);
        }
        let (_, pred, mats) = self.masked_forward(g, inputs, plans, dropout)?;
        let raw = self.config.patch.raw_width();
        let n = mats[0].len();
        let mut target = vec![T::zero(); inputs.len() * n * raw];
        let mut weight = vec![T::zero(); inputs.len() * n * raw];
        for (b, (h, plan)) in targets.iter().zip(plans).enumerate() {
            if h.dims() != mats[b].source_shape {
                return Err(Error::shape("masked_loss", format!("target {:?} vs input {:?}", h.dims(), mats[b].source_shape)));
            }
            let tp = partition_patches(h, &self.config.patch)?;
            for &i in &plan.masked {
                let row = tp.values.row(i);
                let valid = &tp.valid[i * raw..(i + 1) * raw];
                let power: f64 = row.iter().zip(valid).filter(|(_, &v)| v).map(|(&x, _)| (x as f64).powi(2)).sum();
                let count = valid.iter().filter(|&&v| v).count();
                let denom = power.max(POWER_FLOOR * count as f64) * masked_total as f64;
                let off = (b * n + i) * raw;
                for c in 0..raw {
                    target[off + c] = T::of(row[c] as f64);
                    if valid[c] {
                        weight[off + c] = T::of(1.0 / denom);
                    }
                }
            }
        }
        let t = g.constant(Tensor::new([inputs.len() * n, raw], target)?);
        let w = g.constant(Tensor::new([inputs.len() * n, raw], weight)?);
        Ok(Some(g.weighted_sq_error(pred, t, w)?))
    }

    /// Loss value with separate encoder inputs and reconstruction targets.
    pub fn masked_loss(&self, inputs: &[&ChannelTensor], targets: &[&ChannelTensor], plans: &[MaskPlan]) -> Result<f64> {
        let mut g = Graph::new();
        Ok(match self.masked_loss_graph(&mut g, inputs, targets, plans, None)? {
            Some(v) => g.value(v).data()[0].as_f64(),
            None => 0.0,
        })
    }

    /// One Adam step on the masked-reconstruction loss of `batch`.
    ///
    /// With nothing masked the loss is 0 and parameters are not touched.
    pub fn pretrain_step(&mut self, batch: &[ChannelTensor], opt: &mut Adam<T>, seed: u64) -> Result<f64> {
        let refs: Vec<&ChannelTensor> = batch.iter().collect();
        let plans = self.plan_batch(&refs, seed)?;
        let mut g = Graph::new();
        let dropout = Some((self.config.dropout, seed));
        let Some(loss) = self.masked_loss_graph(&mut g, &refs, &refs, &plans, dropout)? else {
            return Ok(0.0);
        };
        let value = g.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(Error::NonFinite("pretraining loss".into()));
        }
        let grads = g.backpropagate(loss, &Tensor::scalar(T::one()), &self.params)?;
        opt.step(&mut self.params, &grads)?;
        Ok(value)
    }

    /// Shuffled mini-batch pretraining. `on_epoch` runs after each epoch
    /// (checkpoint hook).
    pub fn pretrain(
        &mut self,
        dataset: &[ChannelTensor],
        opts: &PretrainOptions,
        mut on_epoch: impl FnMut(usize, &Self) -> Result<()>,
    ) -> Result<PretrainReport> {
        if dataset.is_empty() {
            return Err(Error::Contract("pretraining dataset is empty".into()));
        }
        if opts.batch_size == 0 {
            return Err(Error::InvalidConfig("pretrain.batch_size must be at least 1".into()));
        }
        let mut opt = Adam::new(AdamConfig::with_lr(opts.lr))?;
        let mut report = PretrainReport::default();
        let limit = opts.max_steps.unwrap_or(usize::MAX);
        for epoch in 0..opts.epochs {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng::stream(opts.seed, 0x5f + epoch as u64));
            for chunk in order.chunks(opts.batch_size) {
                if report.losses.len() >= limit {
                    break;
                }
                let step = report.losses.len();
                let batch: Vec<ChannelTensor> = chunk.iter().map(|&i| dataset[i].clone()).collect();
                let loss = self
                    .pretrain_step(&batch, &mut opt, rng::mix(opts.seed, step as u64))
                    .map_err(|e| match e {
                        Error::NonFinite(_) => Error::NonFiniteLoss(step),
                        e => e,
                    })?;
                report.losses.push(loss);
            }
            self.refresh_id();
            report.epochs_completed = epoch + 1;
            on_epoch(epoch, self)?;
            if report.losses.len() >= limit {
                break;
            }
        }
        Ok(report)
    }
}
