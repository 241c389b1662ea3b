//! Check reverse-mode gradients of a small attention block against central
//! differences in f64.

use csifm::numerics::layers::{dense, init_dense, init_norm, norm};
use csifm::numerics::{finite_difference_check, init, AttentionSpec, Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> csifm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    init_norm(&mut store, "ln", 8)?;
    for p in ["q", "k", "v", "out"] {
        init_dense(&mut store, &mut rng, p, 8, 8)?;
    }

    let mut g = Graph::<f64>::new();
    let x = g.constant(init::uniform(&mut rng, [5, 8], 1.0));
    let h = norm(&mut g, &store, "ln", x)?;
    let (q, k, v) = (dense(&mut g, &store, "q", h)?, dense(&mut g, &store, "k", h)?, dense(&mut g, &store, "v", h)?);
    let a = g.attention(q, k, v, AttentionSpec { heads: 2, groups: 1, allowed: None })?;
    let y = dense(&mut g, &store, "out", a)?;
    let t = g.constant(Tensor::from_fn([5, 8], |i| (i as f64 * 0.3).sin()));
    let w = g.constant(Tensor::full([5, 8], 1.0));
    let loss = g.weighted_sq_error(y, t, w)?;

    let report = finite_difference_check(&g, loss, 1e-5, 1e-4)?;
    for p in &report.params {
        println!("{:<6} max relative error {:.2e} {}", p.name, p.max_rel_error, if p.passed { "ok" } else { "FAIL" });
    }
    println!("worst {:.2e}, all passed: {}", report.worst(), report.passed());
    Ok(())
}
