//! Parameter initialisers and graph builders for common layers.

use rand_chacha::ChaCha8Rng;

use super::{init, AttentionSpec, Graph, ParamStore, Scalar, Var};
use crate::error::Result;

pub const LN_EPS: f64 = 1e-5;

/// Insert `{prefix}.w [fan_in, fan_out]` (Glorot) and `{prefix}.b` (zeros).
pub fn init_dense<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    store.insert(format!("{prefix}.w"), init::xavier(rng, fan_in, fan_out))?;
    store.insert(format!("{prefix}.b"), init::zeros(fan_out))
}

pub fn dense<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    g.linear(x, w, b)
}

/// Gain `{prefix}.g` (ones) and shift `{prefix}.b` (zeros).
pub fn init_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, width: usize) -> Result<()> {
    store.insert(format!("{prefix}.g"), init::ones(width))?;
    store.insert(format!("{prefix}.b"), init::zeros(width))
}

pub fn norm<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let gain = g.param(store, &format!("{prefix}.g"))?;
    let shift = g.param(store, &format!("{prefix}.b"))?;
    let y = g.layer_norm(x, LN_EPS)?;
    let y = g.mul_row(y, gain)?;
    g.add_row(y, shift)
}

/// Multi-head attention projections under `{prefix}.{q,k,v,o}`.
pub fn init_attention<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, d: usize) -> Result<()> {
    for p in ["q", "k", "v", "o"] {
        init_dense(store, rng, &format!("{prefix}.{p}"), d, d)?;
    }
    Ok(())
}

/// Attention of queries `xq` over keys/values `xkv`.
pub fn attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    prefix: &str,
    xq: Var,
    xkv: Var,
    spec: AttentionSpec,
) -> Result<(Var, Var)> {
    let q = dense(g, store, &format!("{prefix}.q"), xq)?;
    let k = dense(g, store, &format!("{prefix}.k"), xkv)?;
    let v = dense(g, store, &format!("{prefix}.v"), xkv)?;
    let a = g.attention(q, k, v, spec)?;
    Ok((dense(g, store, &format!("{prefix}.o"), a)?, a))
}

/// Pre-norm encoder block: attention and a GELU feed-forward, each with a
/// residual connection.
pub fn init_encoder_block<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    d: usize,
    ff: usize,
) -> Result<()> {
    init_norm(store, &format!("{prefix}.ln1"), d)?;
    init_attention(store, rng, &format!("{prefix}.attn"), d)?;
    init_norm(store, &format!("{prefix}.ln2"), d)?;
    init_dense(store, rng, &format!("{prefix}.ff1"), d, ff)?;
    init_dense(store, rng, &format!("{prefix}.ff2"), ff, d)
}

/// Returns the block output and the attention node (for weight inspection).
pub fn encoder_block<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    prefix: &str,
    x: Var,
    spec: AttentionSpec,
) -> Result<(Var, Var)> {
    let h = norm(g, store, &format!("{prefix}.ln1"), x)?;
    let (a, node) = attention(g, store, &format!("{prefix}.attn"), h, h, spec)?;
    let x = g.add(x, a)?;
    let x = feed_forward(g, store, prefix, x)?;
    Ok((x, node))
}

fn feed_forward<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let h = norm(g, store, &format!("{prefix}.ln2"), x)?;
    let h = dense(g, store, &format!("{prefix}.ff1"), h)?;
    let h = g.gelu(h)?;
    let h = dense(g, store, &format!("{prefix}.ff2"), h)?;
    g.add(x, h)
}

/// Pre-norm decoder block: masked self-attention, cross-attention over
/// `memory`, feed-forward.
pub fn init_decoder_block<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    d: usize,
    ff: usize,
) -> Result<()> {
    init_encoder_block(store, rng, prefix, d, ff)?;
    init_norm(store, &format!("{prefix}.ln3"), d)?;
    init_attention(store, rng, &format!("{prefix}.cross"), d)
}

pub fn decoder_block<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    prefix: &str,
    x: Var,
    memory: Var,
    self_spec: AttentionSpec,
    cross_spec: AttentionSpec,
) -> Result<Var> {
    let h = norm(g, store, &format!("{prefix}.ln1"), x)?;
    let (a, _) = attention(g, store, &format!("{prefix}.attn"), h, h, self_spec)?;
    let x = g.add(x, a)?;
    let h = norm(g, store, &format!("{prefix}.ln3"), x)?;
    let (c, _) = attention(g, store, &format!("{prefix}.cross"), h, memory, cross_spec)?;
    let x = g.add(x, c)?;
    feed_forward(g, store, prefix, x)
}

/// Row-major `allowed` mask where query `i` sees key `j` iff `key_t[j] <= query_t[i]`.
pub fn causal_mask(query_t: &[usize], key_t: &[usize]) -> Vec<bool> {
    query_t.iter().flat_map(|&qi| key_t.iter().map(move |&kj| kj <= qi)).collect()
}
