use rand_chacha::ChaCha8Rng;

use super::HeadConfig;
use crate::error::Result;
use crate::numerics::layers::{dense, init_dense};
use crate::numerics::{Graph, ParamStore, Scalar, Var};

const KERNEL: usize = 3;

pub(super) fn init_1d<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let w = cfg.width;
    init_dense(p, r, "head.in", cfg.input[1], w)?;
    for b in 0..cfg.layers {
        init_dense(p, r, &format!("head.block{b}.conv1"), KERNEL * w, w)?;
        init_dense(p, r, &format!("head.block{b}.conv2"), KERNEL * w, w)?;
    }
    init_dense(p, r, "head.out", w, cfg.output[1])
}

/// `1x1` projection, residual blocks `x + conv(relu(conv(x)))`, per-token linear output.
pub(super) fn forward_1d<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let n = cfg.input[0];
    let mut h = dense(g, p, "head.in", x)?;
    for b in 0..cfg.layers {
        let c = g.im2col1d(h, batch, n, KERNEL)?;
        let c = dense(g, p, &format!("head.block{b}.conv1"), c)?;
        let c = g.relu(c)?;
        let c = g.im2col1d(c, batch, n, KERNEL)?;
        let c = dense(g, p, &format!("head.block{b}.conv2"), c)?;
        h = g.add(h, c)?;
    }
    dense(g, p, "head.out", h)
}

pub(super) fn init_2d<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let w = cfg.width;
    init_dense(p, r, "head.stem", KERNEL * KERNEL * cfg.input[1], w)?;
    for b in 0..cfg.layers {
        init_dense(p, r, &format!("head.block{b}.conv1"), KERNEL * KERNEL * w, w)?;
        init_dense(p, r, &format!("head.block{b}.conv2"), KERNEL * KERNEL * w, w)?;
    }
    init_dense(p, r, "head.fc", w, cfg.output[1])
}

/// `3x3` stem, residual blocks, global average pool, linear logits.
pub(super) fn forward_2d<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let [hh, ww] = cfg.image.expect("validated image");
    let conv = |g: &mut Graph<T>, v: Var, name: &str| -> Result<Var> {
        let c = g.im2col2d(v, batch, hh, ww, KERNEL, KERNEL)?;
        dense(g, p, name, c)
    };
    let stem = conv(g, x, "head.stem")?;
    let mut h = g.relu(stem)?;
    for b in 0..cfg.layers {
        let c = conv(g, h, &format!("head.block{b}.conv1"))?;
        let c = g.relu(c)?;
        let c = conv(g, c, &format!("head.block{b}.conv2"))?;
        let s = g.add(h, c)?;
        h = g.relu(s)?;
    }
    let pooled = g.mean_row_groups(h, hh * ww)?;
    dense(g, p, "head.fc", pooled)
}
