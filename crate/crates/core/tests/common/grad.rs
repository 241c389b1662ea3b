//! Finite-difference cases for every primitive, block and miniature head.

use csifm::chansim::ChannelTensor;
use csifm::encoder::{EncoderConfig, FoundationModel};
use csifm::heads::{Head, HeadConfig};
use csifm::numerics::{finite_difference_check, layers, AttentionSpec, Graph, ParamStore, Tensor, Var};
use csifm::tokenizer::plan_mask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct Case {
    pub name: String,
    pub worst: f64,
    pub passed: bool,
    pub params: usize,
}

pub type Cases = Vec<Case>;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Inputs named `x0, x1, ...` with the given shapes.
fn store(shapes: &[&[usize]], seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (i, sh) in shapes.iter().enumerate() {
        s.insert(format!("x{i}"), random(sh, &mut rng)).unwrap();
    }
    s
}

/// Collapse `y` to a scalar through a fixed random weighting.
fn reduce(g: &mut Graph<f64>, y: Var, seed: u64) -> Var {
    if g.value(y).len() == 1 {
        return y;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(random(g.value(y).shape(), &mut rng));
    let p = g.mul(y, w).unwrap();
    g.sum(p).unwrap()
}

fn record(out: &mut Cases, name: &str, g: &Graph<f64>, loss: Var, step: f64, tol: f64) {
    let r = finite_difference_check(g, loss, step, tol).unwrap();
    out.push(Case { name: name.into(), worst: r.worst(), passed: r.passed(), params: r.params.len() });
}

fn check_with(out: &mut Cases, name: &str, shapes: &[&[usize]], step: f64, tol: f64, f: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
    let s = store(shapes, name.len() as u64);
    let mut g = Graph::new();
    let xs: Vec<Var> = (0..shapes.len()).map(|i| g.param(&s, &format!("x{i}")).unwrap()).collect();
    let y = f(&mut g, &xs);
    let loss = reduce(&mut g, y, 7);
    record(out, name, &g, loss, step, tol);
}

fn check(out: &mut Cases, name: &str, shapes: &[&[usize]], f: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
    check_with(out, name, shapes, STEP, TOL, f)
}

pub fn elementwise_and_matrix() -> Cases {
    let mut c = Vec::new();
    check(&mut c, "matmul", &[&[3, 4], &[4, 5]], |g, x| g.matmul(x[0], x[1]).unwrap());
    check(&mut c, "add", &[&[3, 4], &[3, 4]], |g, x| g.add(x[0], x[1]).unwrap());
    check(&mut c, "sub", &[&[3, 4], &[3, 4]], |g, x| g.sub(x[0], x[1]).unwrap());
    check(&mut c, "mul", &[&[3, 4], &[3, 4]], |g, x| g.mul(x[0], x[1]).unwrap());
    check(&mut c, "scale", &[&[3, 4]], |g, x| g.scale(x[0], -2.5).unwrap());
    check(&mut c, "add_row", &[&[3, 4], &[4]], |g, x| g.add_row(x[0], x[1]).unwrap());
    check(&mut c, "mul_row", &[&[3, 4], &[4]], |g, x| g.mul_row(x[0], x[1]).unwrap());
    check(&mut c, "gelu", &[&[3, 4]], |g, x| g.gelu(x[0]).unwrap());
    check(&mut c, "relu", &[&[3, 4]], |g, x| g.relu(x[0]).unwrap());
    check(&mut c, "tanh", &[&[3, 4]], |g, x| g.tanh(x[0]).unwrap());
    check(&mut c, "sigmoid", &[&[3, 4]], |g, x| g.sigmoid(x[0]).unwrap());
    check(&mut c, "softmax", &[&[3, 5]], |g, x| g.softmax(x[0]).unwrap());
    check(&mut c, "layer_norm", &[&[3, 6]], |g, x| g.layer_norm(x[0], 1e-5).unwrap());
    check(&mut c, "linear", &[&[3, 4], &[4, 2], &[2]], |g, x| g.linear(x[0], x[1], x[2]).unwrap());
    c
}

pub fn structural() -> Cases {
    let mut c = Vec::new();
    check(&mut c, "reshape", &[&[3, 4]], |g, x| g.reshape(x[0], [2, 6]).unwrap());
    check(&mut c, "transpose", &[&[3, 4]], |g, x| g.transpose(x[0]).unwrap());
    check(&mut c, "slice_cols", &[&[3, 5]], |g, x| g.slice_cols(x[0], 1, 4).unwrap());
    check(&mut c, "concat_cols", &[&[3, 2], &[3, 4]], |g, x| g.concat_cols(&[x[0], x[1]]).unwrap());
    check(&mut c, "gather_rows", &[&[4, 3]], |g, x| g.gather_rows(x[0], vec![2, 0, 2, 3]).unwrap());
    check(&mut c, "concat_rows", &[&[2, 3], &[3, 3]], |g, x| g.concat_rows(&[x[0], x[1]]).unwrap());
    check(&mut c, "sum", &[&[3, 4]], |g, x| g.sum(x[0]).unwrap());
    check(&mut c, "mean", &[&[3, 4]], |g, x| g.mean(x[0]).unwrap());
    check(&mut c, "im2col1d", &[&[2 * 5, 3]], |g, x| g.im2col1d(x[0], 2, 5, 3).unwrap());
    check(&mut c, "im2col2d", &[&[2 * 3 * 4, 2]], |g, x| g.im2col2d(x[0], 2, 3, 4, 3, 3).unwrap());
    check(&mut c, "avg_pool2d", &[&[2 * 4 * 6, 2]], |g, x| g.avg_pool2d(x[0], 2, 4, 6, 2, 3).unwrap());
    check(&mut c, "mean_row_groups", &[&[6, 3]], |g, x| g.mean_row_groups(x[0], 3).unwrap());
    check(&mut c, "where_rows", &[&[4, 3], &[1, 3]], |g, x| g.where_rows(x[0], x[1], vec![true, false, false, true]).unwrap());
    c
}

pub fn losses() -> Cases {
    let mut c = Vec::new();
    check(&mut c, "weighted_sq_error", &[&[3, 4], &[3, 4], &[3, 4]], |g, x| {
        let w = g.mul(x[2], x[2]).unwrap();
        g.weighted_sq_error(x[0], x[1], w).unwrap()
    });
    check(&mut c, "cross_entropy", &[&[4, 6]], |g, x| g.cross_entropy(x[0], vec![0, 5, 2, 2]).unwrap());
    check(&mut c, "chamfer", &[&[2 * 5, 3], &[2 * 4, 3]], |g, x| g.chamfer(x[0], x[1], 2).unwrap());
    c
}

pub fn attention() -> Cases {
    let mut c = Vec::new();
    let allowed: Vec<bool> = (0..4).flat_map(|i| (0..4).map(move |j| j <= i)).collect();
    check(&mut c, "attention", &[&[8, 6], &[8, 6], &[8, 6]], |g, x| {
        g.attention(x[0], x[1], x[2], AttentionSpec { heads: 2, groups: 2, allowed: Some(allowed.clone()) }).unwrap()
    });
    check(&mut c, "attention_unmasked", &[&[3, 4], &[5, 4], &[5, 4]], |g, x| {
        g.attention(x[0], x[1], x[2], AttentionSpec { heads: 1, groups: 1, allowed: None }).unwrap()
    });
    c
}

/// `sum(softmax(W v))` is constant in `W`, so its check sees zero gradients;
/// the weighted version has non-trivial ones.
pub fn softmax_of_product() -> Cases {
    let mut c = Vec::new();
    check_with(&mut c, "softmax_wv", &[&[4, 4], &[4, 1]], 1e-3, TOL, |g, x| {
        let z = g.matmul(x[0], x[1]).unwrap();
        let z = g.reshape(z, [1, 4]).unwrap();
        let s = g.softmax(z).unwrap();
        g.sum(s).unwrap()
    });
    check_with(&mut c, "weighted_softmax_wv", &[&[4, 4], &[4, 1]], 1e-3, TOL, |g, x| {
        let z = g.matmul(x[0], x[1]).unwrap();
        let z = g.reshape(z, [1, 4]).unwrap();
        g.softmax(z).unwrap()
    });
    c
}

pub fn linear_mean() -> Cases {
    let mut c = Vec::new();
    check_with(&mut c, "linear_mean", &[&[5, 3], &[3, 2], &[2]], 1e-4, 1e-6, |g, x| {
        let y = g.linear(x[0], x[1], x[2]).unwrap();
        g.mean(y).unwrap()
    });
    c
}

pub fn attention_blocks() -> Cases {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::<f64>::new();
    for l in 0..2 {
        layers::init_encoder_block(&mut s, &mut rng, &format!("b{l}"), 8, 12).unwrap();
    }
    // move the unit norm gains off their symmetric point
    for (_, t) in s.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    s.insert("x", random(&[6, 8], &mut rng)).unwrap();
    let mut g = Graph::new();
    let mut x = g.param(&s, "x").unwrap();
    let allowed = layers::causal_mask(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 1, 2, 2]);
    for l in 0..2 {
        let spec = AttentionSpec { heads: 2, groups: 1, allowed: Some(allowed.clone()) };
        x = layers::encoder_block(&mut g, &s, &format!("b{l}"), x, spec).unwrap().0;
    }
    let loss = reduce(&mut g, x, 11);
    let mut c = Vec::new();
    record(&mut c, "two_attention_blocks", &g, loss, STEP, TOL);
    // every block parameter and the input are bound
    c[0].passed &= c[0].params == s.names().len();
    c
}

pub fn minis() -> Vec<HeadConfig> {
    vec![
        HeadConfig::rescnn1d(6, 4, 5).with_width(8).with_layers(2),
        HeadConfig::rescnn2d(4, 5, 2, 6).with_width(4).with_layers(1),
        HeadConfig { width: 6, ..HeadConfig::lstm([8, 3], 4, 2, [2, 5]) },
        HeadConfig { width: 8, heads: 2, ff_width: 12, ..HeadConfig::transformer_enc(5, 3, 4) },
        HeadConfig {
            width: 8,
            heads: 2,
            ff_width: 12,
            layers: 1,
            decoder_layers: 1,
            ..HeadConfig::transformer_encdec([6, 3], 3, 2, [2, 4])
        },
        HeadConfig::pointcloud(4, 3, 7).with_width(8),
    ]
}

pub fn miniature_heads() -> Cases {
    let mut c = Vec::new();
    for (k, cfg) in minis().into_iter().enumerate() {
        let head: Head<f64> = Head::<f32>::new(cfg.clone(), k as u64).unwrap().cast();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let batch = 2;
        let x = random(&[batch * cfg.input[0], cfg.input[1]], &mut rng);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = head.forward_graph(&mut g, xv, batch).unwrap();
        let loss = reduce(&mut g, y, k as u64);
        record(&mut c, cfg.kind.name(), &g, loss, STEP, TOL);
    }
    c
}

pub fn tiny_encoder() -> Cases {
    let model: FoundationModel<f64> = FoundationModel::<f32>::new(EncoderConfig::tiny(), 5).unwrap().cast();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = ChannelTensor::from_values(Tensor::from_fn([4, 4, 4, 2], |_| rng.random_range(-1.0f32..1.0))).unwrap();
    let n = model.config.patch.token_count(h.dims()).unwrap();
    let plans = vec![plan_mask(n, 0.4, 1).unwrap()];
    let mut g = Graph::new();
    let loss = model.masked_loss_graph(&mut g, &[&h], &[&h], &plans, None).unwrap().unwrap();
    let mut c = Vec::new();
    record(&mut c, "tiny_encoder_masked_loss", &g, loss, STEP, TOL);
    c
}

pub fn full_suite() -> Cases {
    [
        elementwise_and_matrix(),
        structural(),
        losses(),
        attention(),
        softmax_of_product(),
        linear_mean(),
        attention_blocks(),
        miniature_heads(),
        tiny_encoder(),
    ]
    .concat()
}
