use rand_chacha::ChaCha8Rng;

use super::{step_features, HeadConfig};
use crate::error::Result;
use crate::numerics::layers::{dense, init_dense};
use crate::numerics::{init, Graph, ParamStore, Scalar, Tensor, Var};

pub(super) fn init_lstm<T: Scalar>(cfg: &HeadConfig, p: &mut ParamStore<T>, r: &mut ChaCha8Rng) -> Result<()> {
    let h = cfg.width;
    if cfg.row_proj > 0 {
        init_dense(p, r, "head.rows", cfg.input[1], cfg.row_proj)?;
    }
    let mut fan_in = cfg.step_features();
    for l in 0..cfg.layers {
        p.insert(format!("head.lstm{l}.wx"), init::xavier(r, fan_in, 4 * h))?;
        p.insert(format!("head.lstm{l}.wh"), init::xavier(r, h, 4 * h))?;
        // forget-gate bias starts at 1
        let b = Tensor::from_fn([4 * h], |i| if (h..2 * h).contains(&i) { T::one() } else { T::zero() });
        p.insert(format!("head.lstm{l}.b"), b)?;
        fan_in = h;
    }
    init_dense(p, r, "head.out", h, cfg.output[0] * cfg.output[1])
}

/// Stacked LSTM over the input steps; the last top-layer state is read out
/// linearly into every output row.
pub(super) fn forward_lstm<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    let h = cfg.width;
    let seq = step_features(cfg, g, p, x, batch)?;
    let mut inputs: Vec<Var> = (0..cfg.steps)
        .map(|t| g.gather_rows(seq, (0..batch).map(|b| b * cfg.steps + t).collect()))
        .collect::<Result<_>>()?;
    let mut last = None;
    for l in 0..cfg.layers {
        let wx = g.param(p, &format!("head.lstm{l}.wx"))?;
        let wh = g.param(p, &format!("head.lstm{l}.wh"))?;
        let bias = g.param(p, &format!("head.lstm{l}.b"))?;
        let mut hs = g.constant(Tensor::zeros([batch, h]));
        let mut cs = g.constant(Tensor::zeros([batch, h]));
        let mut outputs = Vec::with_capacity(inputs.len());
        for &xt in &inputs {
            let a = g.matmul(xt, wx)?;
            let b = g.matmul(hs, wh)?;
            let z = g.add(a, b)?;
            let z = g.add_row(z, bias)?;
            let zi = g.slice_cols(z, 0, h)?;
            let zf = g.slice_cols(z, h, 2 * h)?;
            let zg = g.slice_cols(z, 2 * h, 3 * h)?;
            let zo = g.slice_cols(z, 3 * h, 4 * h)?;
            let i = g.sigmoid(zi)?;
            let f = g.sigmoid(zf)?;
            let cand = g.tanh(zg)?;
            let o = g.sigmoid(zo)?;
            let keep = g.mul(f, cs)?;
            let write = g.mul(i, cand)?;
            cs = g.add(keep, write)?;
            let tc = g.tanh(cs)?;
            hs = g.mul(o, tc)?;
            outputs.push(hs);
        }
        last = Some(hs);
        inputs = outputs;
    }
    let y = dense(g, p, "head.out", last.expect("at least one layer"))?;
    g.reshape(y, [batch * cfg.output[0], cfg.output[1]])
}
