use rand::Rng;
use sha2::{Digest, Sha256};

use super::EncoderConfig;
use crate::chansim::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::layers::{self, causal_mask};
use crate::numerics::{init, AttentionSpec, Graph, ParamStore, Scalar, Tensor, Var};
use crate::rng;
use crate::tokenizer::{partition_patches, MaskPlan, PatchMatrix, PatchPos, PatchSpec, PositionalEncoding, TokenSequence};

/// Encoder output `[N, d_model]` plus where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct UniversalRepresentation {
    pub values: Tensor<f32>,
    pub checkpoint_id: String,
    pub patch: PatchSpec,
    pub source_shape: (usize, usize, usize),
}

impl UniversalRepresentation {
    pub fn tokens(&self) -> usize {
        self.values.rows_cols().0
    }

    pub fn width(&self) -> usize {
        self.values.rows_cols().1
    }

    /// Representation size over the number of input measurements
    /// `T * S * F` (complex entries count once).
    pub fn size_ratio(&self) -> f64 {
        let (t, s, f) = self.source_shape;
        self.values.len() as f64 / (t * s * f) as f64
    }
}

/// Handles into a recorded encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderPass {
    /// Final hidden states `[B * N, d_model]`.
    pub hidden: Var,
    /// One attention node per layer.
    pub attention: Vec<Var>,
    pub batch: usize,
    pub tokens: usize,
}

/// Patch embedding, mask token, transformer stack and reconstruction head.
#[derive(Clone, Debug, PartialEq)]
pub struct FoundationModel<T = f32> {
    pub config: EncoderConfig,
    pub params: ParamStore<T>,
    /// Short identifier carried into every representation.
    pub id: String,
}

impl<T: Scalar> FoundationModel<T> {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model();
        let raw = config.patch.raw_width();
        let mut r = rng::stream(seed, 0xe4c);
        let mut p = ParamStore::new();
        p.insert("embed.w", init::xavier(&mut r, raw, d))?;
        p.insert("mask_token", init::uniform(&mut r, [d], 0.02))?;
        for l in 0..config.layers {
            layers::init_encoder_block(&mut p, &mut r, &format!("layer{l}"), d, config.ff_width)?;
        }
        layers::init_norm(&mut p, "final_ln", d)?;
        layers::init_dense(&mut p, &mut r, "recon", d, raw)?;
        let mut m = FoundationModel { config, params: p, id: String::new() };
        m.refresh_id();
        Ok(m)
    }

    /// Rebuild a model around loaded parameters, checking every expected
    /// tensor is present with the right shape.
    pub fn from_params(config: EncoderConfig, params: ParamStore<T>) -> Result<Self> {
        let template = FoundationModel::<T>::new(config.clone(), 0)?;
        for (name, t) in template.params.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::shape("FoundationModel", format!("{name}: {:?} vs {:?}", got.shape(), t.shape())));
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} tensors, model expects {}",
                params.len(),
                template.params.len()
            )));
        }
        let mut m = FoundationModel { config, params, id: String::new() };
        m.refresh_id();
        Ok(m)
    }

    /// Recompute [`id`](Self::id) from the parameter bytes.
    pub fn refresh_id(&mut self) {
        let mut h = Sha256::new();
        for (name, t) in self.params.iter() {
            h.update(name.as_bytes());
            for x in t.data() {
                h.update((x.as_f64() as f32).to_le_bytes());
            }
        }
        self.id = hex::encode(&h.finalize()[..8]);
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn positional(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.config.d_model())
    }

    pub fn cast<U: Scalar>(&self) -> FoundationModel<U> {
        FoundationModel { config: self.config.clone(), params: self.params.cast(), id: self.id.clone() }
    }

    fn positional_rows(&self, positions: &[PatchPos], batch: usize) -> Tensor<T> {
        let table = self.positional().table(positions).cast::<T>();
        let mut data = Vec::with_capacity(table.len() * batch);
        for _ in 0..batch {
            data.extend_from_slice(table.data());
        }
        Tensor::new([positions.len() * batch, self.config.d_model()], data).expect("tiled table")
    }

    /// Patch projection, optional mask-token replacement, positional terms.
    ///
    /// `patches` is `[B * N, raw]`; `mask` flags rows to replace.
    pub fn embed_graph(
        &self,
        g: &mut Graph<T>,
        patches: Var,
        positions: &[PatchPos],
        batch: usize,
        mask: Option<Vec<bool>>,
    ) -> Result<Var> {
        let w = g.param(&self.params, "embed.w")?;
        let mut x = g.matmul(patches, w)?;
        if let Some(mask) = mask {
            let token = g.param(&self.params, "mask_token")?;
            x = g.where_rows(x, token, mask)?;
        }
        let pe = g.constant(self.positional_rows(positions, batch));
        g.add(x, pe)
    }

    /// Transformer stack over embedded tokens `[B * N, d_model]`.
    pub fn encode_graph(&self, g: &mut Graph<T>, tokens: Var, positions: &[PatchPos], batch: usize) -> Result<EncoderPass> {
        let d = self.config.d_model();
        let (rows, cols) = g.value(tokens).rows_cols();
        let n = positions.len();
        if cols != d || rows != n * batch {
            return Err(Error::shape(
                "encode",
                format!("tokens {:?} for {batch} x {n} positions at width {d}", g.value(tokens).shape()),
            ));
        }
        let t: Vec<usize> = positions.iter().map(|p| p.t).collect();
        let spec = AttentionSpec { heads: self.config.heads, groups: batch, allowed: Some(causal_mask(&t, &t)) };
        let mut x = tokens;
        let mut attention = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (y, a) = layers::encoder_block(g, &self.params, &format!("layer{l}"), x, spec.clone())?;
            x = y;
            attention.push(a);
        }
        let hidden = layers::norm(g, &self.params, "final_ln", x)?;
        Ok(EncoderPass { hidden, attention, batch, tokens: n })
    }

    /// Linear map from hidden states back to raw patch width.
    pub fn reconstruct_graph(&self, g: &mut Graph<T>, hidden: Var) -> Result<Var> {
        layers::dense(g, &self.params, "recon", hidden)
    }

    /// Partition a batch of same-shaped tensors into stacked patch rows.
    pub fn stack_patches(&self, batch: &[&ChannelTensor]) -> Result<(Vec<PatchMatrix>, Tensor<T>)> {
        let first = batch.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let shape = first.dims();
        let mut mats = Vec::with_capacity(batch.len());
        let mut data = Vec::new();
        for h in batch {
            if h.dims() != shape {
                return Err(Error::shape("stack_patches", format!("{:?} vs {shape:?}", h.dims())));
            }
            let p = partition_patches(h, &self.config.patch)?;
            data.extend(p.values.data().iter().map(|&x| T::of(x as f64)));
            mats.push(p);
        }
        let rows = mats.len() * mats[0].len();
        let stacked = Tensor::new([rows, self.config.patch.raw_width()], data)?;
        Ok((mats, stacked))
    }

    /// Masked-token graph for a batch: returns the pass and the predicted
    /// patches `[B * N, raw]`.
    pub fn masked_forward(
        &self,
        g: &mut Graph<T>,
        inputs: &[&ChannelTensor],
        plans: &[MaskPlan],
        dropout: Option<(f64, u64)>,
    ) -> Result<(EncoderPass, Var, Vec<PatchMatrix>)> {
        let (mats, stacked) = self.stack_patches(inputs)?;
        let n = mats[0].len();
        if plans.len() != inputs.len() || plans.iter().any(|p| p.n != n || p.masked.iter().any(|&i| i >= n)) {
            return Err(Error::Contract(format!("{} mask plans for {} inputs of {n} tokens", plans.len(), inputs.len())));
        }
        let mask: Vec<bool> = plans.iter().flat_map(|p| p.row_mask()).collect();
        let x = g.constant(stacked);
        let mut tokens = self.embed_graph(g, x, &mats[0].positions, inputs.len(), Some(mask))?;
        if let Some((rate, seed)) = dropout.filter(|(r, _)| *r > 0.0) {
            let mut r = rng::stream(seed, 0xd0);
            let keep = T::of(1.0 / (1.0 - rate));
            let shape = g.value(tokens).shape().to_vec();
            let m = Tensor::from_fn(shape, |_| if r.random::<f64>() < rate { T::zero() } else { keep });
            let m = g.constant(m);
            tokens = g.mul(tokens, m)?;
        }
        let pass = self.encode_graph(g, tokens, &mats[0].positions, inputs.len())?;
        let pred = self.reconstruct_graph(g, pass.hidden)?;
        Ok((pass, pred, mats))
    }
}

impl FoundationModel<f32> {
    /// Run the encoder on an embedded token sequence.
    pub fn encode(&self, seq: &TokenSequence) -> Result<UniversalRepresentation> {
        let mut g = Graph::new();
        let x = g.constant(seq.tokens.clone());
        let pass = self.encode_graph(&mut g, x, &seq.positions, 1)?;
        Ok(self.wrap(g.value(pass.hidden).clone(), seq.source_shape))
    }

    /// Per-layer attention weights `[1, heads, N, N]` for a token sequence.
    pub fn attention_maps(&self, seq: &TokenSequence) -> Result<Vec<Tensor<f32>>> {
        let mut g = Graph::new();
        let x = g.constant(seq.tokens.clone());
        let pass = self.encode_graph(&mut g, x, &seq.positions, 1)?;
        Ok(pass.attention.iter().filter_map(|&a| g.attention_weights(a).cloned()).collect())
    }

    /// Embed a channel without masking.
    pub fn tokenize(&self, h: &ChannelTensor) -> Result<TokenSequence> {
        let p = partition_patches(h, &self.config.patch)?;
        crate::tokenizer::embed_patches(&p, self.params.get("embed.w")?, &self.positional())
    }

    /// Partition, embed without masking, encode.
    pub fn represent(&self, h: &ChannelTensor) -> Result<UniversalRepresentation> {
        self.encode(&self.tokenize(h)?)
    }

    /// [`represent`](Self::represent) over many inputs, in parallel, order kept.
    pub fn represent_all(&self, hs: &[ChannelTensor]) -> Result<Vec<UniversalRepresentation>> {
        use rayon::prelude::*;
        hs.par_iter().map(|h| self.represent(h)).collect()
    }

    /// Linear head from hidden states to raw patches `[N, raw]`.
    pub fn reconstruct_masked(&self, rep: &UniversalRepresentation) -> Result<Tensor<f32>> {
        let mut y = rep.values.matmul(self.params.get("recon.w")?)?;
        let b = self.params.get("recon.b")?.data();
        for row in y.data_mut().chunks_exact_mut(b.len()) {
            row.iter_mut().zip(b).for_each(|(a, &c)| *a += c);
        }
        Ok(y)
    }

    fn wrap(&self, values: Tensor<f32>, source_shape: (usize, usize, usize)) -> UniversalRepresentation {
        UniversalRepresentation { values, checkpoint_id: self.id.clone(), patch: self.config.patch, source_shape }
    }
}
