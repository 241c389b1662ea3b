use rand_chacha::ChaCha8Rng;

use super::{step_features, HeadConfig};
use crate::error::Result;
use crate::numerics::layers::{self, causal_mask, dense, init_dense, init_norm, norm};
use crate::numerics::{init, AttentionSpec, Graph, ParamStore, Scalar, Var};

fn tile<T: Scalar>(g: &mut Graph<T>, v: Var, batch: usize) -> Result<Var> {
    g.concat_rows(&vec![v; batch])
}

pub(super) fn init_enc<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let d = cfg.width;
    init_dense(p, r, "head.in", cfg.input[1], d)?;
    p.insert("head.pos", init::uniform(r, [cfg.input[0], d], 0.02))?;
    for l in 0..cfg.layers {
        layers::init_encoder_block(p, r, &format!("head.enc{l}"), d, cfg.ff_width)?;
    }
    init_norm(p, "head.enc_ln", d)?;
    init_dense(p, r, "head.out", d, cfg.output[1])
}

/// Bidirectional encoder with a learned position table; per-row output.
pub(super) fn forward_enc<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let h = dense(g, p, "head.in", x)?;
    let pos = g.param(p, "head.pos")?;
    let pos = tile(g, pos, batch)?;
    let h = g.add(h, pos)?;
    let h = encoder_stack(cfg, g, p, h, batch)?;
    dense(g, p, "head.out", h)
}

fn encoder_stack<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, mut h: Var, batch: usize) -> Result<Var> {
    let spec = AttentionSpec { heads: cfg.heads, groups: batch, allowed: None };
    for l in 0..cfg.layers {
        h = layers::encoder_block(g, p, &format!("head.enc{l}"), h, spec.clone())?.0;
    }
    norm(g, p, "head.enc_ln", h)
}

pub(super) fn init_encdec<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let d = cfg.width;
    if cfg.row_proj > 0 {
        init_dense(p, r, "head.rows", cfg.input[1], cfg.row_proj)?;
    }
    init_dense(p, r, "head.in", cfg.step_features(), d)?;
    p.insert("head.pos", init::uniform(r, [cfg.steps, d], 0.02))?;
    for l in 0..cfg.layers {
        layers::init_encoder_block(p, r, &format!("head.enc{l}"), d, cfg.ff_width)?;
    }
    init_norm(p, "head.enc_ln", d)?;
    p.insert("head.query", init::uniform(r, [cfg.output[0], d], 0.5))?;
    for l in 0..cfg.decoder_layers {
        layers::init_decoder_block(p, r, &format!("head.dec{l}"), d, cfg.ff_width)?;
    }
    init_norm(p, "head.dec_ln", d)?;
    init_dense(p, r, "head.out", d, cfg.output[1])
}

/// Encoder over input steps; decoder over learned output-row queries with
/// causal self-attention and cross-attention to the encoded steps.
pub(super) fn forward_encdec<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let seq = step_features(cfg, g, p, x, batch)?;
    let h = dense(g, p, "head.in", seq)?;
    let pos = g.param(p, "head.pos")?;
    let pos = tile(g, pos, batch)?;
    let h = g.add(h, pos)?;
    let memory = encoder_stack(cfg, g, p, h, batch)?;
    let q = g.param(p, "head.query")?;
    let mut y = tile(g, q, batch)?;
    let idx: Vec<usize> = (0..cfg.output[0]).collect();
    let self_spec = AttentionSpec { heads: cfg.heads, groups: batch, allowed: Some(causal_mask(&idx, &idx)) };
    let cross_spec = AttentionSpec { heads: cfg.heads, groups: batch, allowed: None };
    for l in 0..cfg.decoder_layers {
        y = layers::decoder_block(g, p, &format!("head.dec{l}"), y, memory, self_spec.clone(), cross_spec.clone())?;
    }
    let y = norm(g, p, "head.dec_ln", y)?;
    dense(g, p, "head.out", y)
}
