use rand_chacha::ChaCha8Rng;

use super::HeadConfig;
use crate::error::Result;
use crate::numerics::layers::{dense, init_dense};
use crate::numerics::{Graph, ParamStore, Scalar, Var};

pub(super) fn init<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let mut fan_in = cfg.input[1];
    for l in 0..cfg.layers {
        init_dense(p, r, &format!("head.hidden{l}"), fan_in, cfg.width)?;
        fan_in = cfg.width;
    }
    init_dense(p, r, "head.out", fan_in, cfg.output[0] * 3)
}

/// Token mean-pool, ReLU MLP, `points x 3` coordinates.
pub(super) fn forward<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let mut h = g.mean_row_groups(x, cfg.input[0])?;
    for l in 0..cfg.layers {
        let z = dense(g, p, &format!("head.hidden{l}"), h)?;
        h = g.relu(z)?;
    }
    let y = dense(g, p, "head.out", h)?;
    g.reshape(y, [batch * cfg.output[0], 3])
}
