use csifm::chansim::{corpus_sample, ChannelTensor, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel};
use csifm::numerics::{Adam, AdamConfig, Graph, Tensor};
use csifm::tokenizer::{partition_patches, plan_mask, reassemble_patches, MaskPlan, PaddingPolicy, PatchSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_channel(shape: (usize, usize, usize), seed: u64) -> ChannelTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelTensor::from_values(Tensor::from_fn([shape.0, shape.1, shape.2, 2], |_| rng.random_range(-1.0f32..1.0))).unwrap()
}

fn small_config(heads: usize, head_dim: usize, layers: usize, patch: (usize, usize, usize), ratio: f64) -> EncoderConfig {
    EncoderConfig {
        patch: PatchSpec { time: patch.0, space: patch.1, freq: patch.2, d_model: heads * head_dim, padding: PaddingPolicy::ZeroPad },
        layers,
        heads,
        ff_width: 2 * heads * head_dim,
        mask_ratio: ratio,
        dropout: 0.0,
    }
}

fn corpus(seed: u64, n: usize) -> Vec<ChannelTensor> {
    (0..n)
        .map(|i| {
            let mut h = corpus_sample(seed, i, &CorpusConfig::default()).unwrap();
            h.normalize_power();
            h
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn past_outputs_ignore_future_tokens(
        heads in 1usize..4,
        head_dim in prop::sample::select(vec![8usize, 12]),
        layers in 1usize..3,
        pt in 1usize..3,
        t in 2usize..7,
        s in 1usize..4,
        f in 2usize..6,
        seed in any::<u64>(),
    ) {
        let cfg = small_config(heads, head_dim, layers, (pt, 1, 2), 0.4);
        let m = FoundationModel::<f32>::new(cfg, seed).unwrap();
        let seq = m.tokenize(&random_channel((t, s, f), seed)).unwrap();
        let t_max = seq.positions.iter().map(|p| p.t).max().unwrap();
        let k = (seed as usize) % t_max.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let mut other = seq.clone();
        for (i, p) in seq.positions.iter().enumerate() {
            if p.t > k {
                other.tokens.row_mut(i).iter_mut().for_each(|x| *x += rng.random_range(-3.0f32..3.0));
            }
        }
        let a = m.encode(&seq).unwrap();
        let b = m.encode(&other).unwrap();
        for (i, p) in seq.positions.iter().enumerate().filter(|(_, p)| p.t <= k) {
            for (x, y) in a.values.row(i).iter().zip(b.values.row(i)) {
                prop_assert!((x - y).abs() <= 1e-6, "token {:?}: {} vs {}", p, x, y);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn loss_ignores_unmasked_targets(seed in any::<u64>(), ratio in 0.1f64..0.9) {
        let m = FoundationModel::<f32>::new(small_config(2, 4, 1, (2, 2, 2), ratio), seed).unwrap();
        let h = random_channel((4, 4, 6), seed);
        let p = partition_patches(&h, &m.config.patch).unwrap();
        let plan = plan_mask(p.len(), ratio, seed).unwrap();
        let base = m.masked_loss(&[&h], &[&h], std::slice::from_ref(&plan)).unwrap();
        let mut rows = p.values.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        for i in (0..p.len()).filter(|i| !plan.masked.contains(i)) {
            rows.row_mut(i).iter_mut().for_each(|x| *x = rng.random_range(-9.0..9.0));
        }
        let t = ChannelTensor::from_values(reassemble_patches(&rows, &p.positions, &m.config.patch, h.dims()).unwrap()).unwrap();
        let moved = m.masked_loss(&[&h], &[&t], &[plan]).unwrap();
        prop_assert_eq!(base.to_bits(), moved.to_bits());
    }

    #[test]
    fn ratio_zero_leaves_parameters_bitwise(seed in any::<u64>()) {
        let mut m = FoundationModel::<f32>::new(small_config(2, 4, 2, (2, 2, 2), 0.0), seed).unwrap();
        let before = m.params.clone();
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        for step in 0..3 {
            let batch = [random_channel((4, 2, 4), seed ^ step), random_channel((4, 2, 4), seed ^ (step + 9))];
            prop_assert_eq!(m.pretrain_step(&batch, &mut opt, seed ^ step).unwrap(), 0.0);
        }
        for ((na, a), (nb, b)) in m.params.iter().zip(before.iter()) {
            prop_assert_eq!(na, nb);
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

/// Loss on `data` under fixed plans, for before/after comparisons.
fn fixed_plan_loss(m: &FoundationModel<f32>, data: &[ChannelTensor], seed: u64) -> f64 {
    let refs: Vec<&ChannelTensor> = data.iter().collect();
    let plans = m.plan_batch(&refs, seed).unwrap();
    m.masked_loss(&refs, &refs, &plans).unwrap()
}

#[test]
fn desk_loss_halves_within_200_steps() {
    let data = corpus(0, 64);
    let mut m = FoundationModel::<f32>::new(EncoderConfig::desk(), 0).unwrap();
    let initial = fixed_plan_loss(&m, &data, 99);
    let mut opt = Adam::new(AdamConfig::with_lr(1e-3)).unwrap();
    for step in 0..200u64 {
        let start = (step as usize * 4) % data.len();
        m.pretrain_step(&data[start..start + 4], &mut opt, step).unwrap();
    }
    let fin = fixed_plan_loss(&m, &data, 99);
    eprintln!("masked loss {initial:.4} -> {fin:.4}");
    assert!(fin <= 0.5 * initial, "{initial} -> {fin}");
}

#[test]
fn overfits_a_single_sample() {
    const LR: f64 = 1e-3;
    let data = corpus(5, 1);
    // the same sample four times, each copy under its own mask
    let batch = vec![data[0].clone(); 4];
    let mut m = FoundationModel::<f32>::new(EncoderConfig::desk(), 1).unwrap();
    let mut opt = Adam::new(AdamConfig::with_lr(LR)).unwrap();
    for step in 0..500u64 {
        m.pretrain_step(&batch, &mut opt, step).unwrap();
    }
    let refs = [&data[0]];
    let n = m.config.patch.token_count(data[0].dims()).unwrap();
    let plans: Vec<MaskPlan> = (0..8).map(|s| plan_mask(n, 0.4, 1000 + s).unwrap()).collect();
    let mean: f64 = plans.iter().map(|p| m.masked_loss(&refs, &refs, std::slice::from_ref(p)).unwrap()).sum::<f64>() / 8.0;
    eprintln!("masked-patch NMSE after 500 steps: {mean:.5}");
    assert!(mean < 1e-2, "{mean}");
}

#[test]
fn desk_parameters_all_receive_gradient() {
    let m = FoundationModel::<f32>::new(EncoderConfig::desk(), 2).unwrap();
    let data = corpus(2, 2);
    let refs: Vec<&ChannelTensor> = data.iter().collect();
    let plans = m.plan_batch(&refs, 4).unwrap();
    let mut g = Graph::new();
    let loss = m.masked_loss_graph(&mut g, &refs, &refs, &plans, None).unwrap().unwrap();
    let grads = g.backpropagate(loss, &Tensor::scalar(1.0), &m.params).unwrap();
    assert_eq!(grads.by_name.len(), m.params.names().len());
    for (name, t) in &grads.by_name {
        assert!(t.data().iter().any(|&x| x != 0.0), "{name}");
    }
}

#[test]
fn representations_are_deterministic() {
    let m = FoundationModel::<f32>::new(EncoderConfig::desk(), 3).unwrap();
    let h = &corpus(1, 1)[0];
    let a = m.represent(h).unwrap();
    let b = m.represent(h).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.values.shape(), &[64, 128]);
    assert!(a.values.is_finite());
}

/// Ridge regression `[x, 1] -> y` by Cholesky on the normal equations.
fn ridge(x: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    let d = x[0].len() + 1;
    let k = y[0].len();
    let row = |r: &Vec<f64>| r.iter().copied().chain([1.0]).collect::<Vec<f64>>();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![vec![0.0; k]; d];
    for (xr, yr) in x.iter().zip(y) {
        let xr = row(xr);
        for i in 0..d {
            for j in 0..d {
                a[i][j] += xr[i] * xr[j];
            }
            for j in 0..k {
                b[i][j] += xr[i] * yr[j];
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += lambda;
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|m| l[i][m] * l[j][m]).sum::<f64>();
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let mut w = vec![vec![0.0; k]; d];
    for c in 0..k {
        let mut z = vec![0.0; d];
        for i in 0..d {
            z[i] = (b[i][c] - (0..i).map(|m| l[i][m] * z[m]).sum::<f64>()) / l[i][i];
        }
        for i in (0..d).rev() {
            w[i][c] = (z[i] - (i + 1..d).map(|m| l[m][i] * w[m][c]).sum::<f64>()) / l[i][i];
        }
    }
    w
}

fn probe_nmse(w: &[Vec<f64>], x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (xr, yr) in x.iter().zip(y) {
        for (c, &t) in yr.iter().enumerate() {
            let p: f64 = xr.iter().zip(w).map(|(a, wr)| a * wr[c]).sum::<f64>() + w[xr.len()][c];
            num += (p - t) * (p - t);
            den += t * t;
        }
    }
    num / den
}

/// Per masked token: its hidden state, the raw patches of its two frequency
/// neighbours (zero when masked or off the grid), and the true patch.
type Rows = Vec<Vec<f64>>;

fn probe_rows(m: &FoundationModel<f32>, data: &[ChannelTensor], seed: u64) -> (Rows, Rows, Rows) {
    let (mut rep, mut raw, mut target) = (Vec::new(), Vec::new(), Vec::new());
    for (i, h) in data.iter().enumerate() {
        let n = m.config.patch.token_count(h.dims()).unwrap();
        let plan = plan_mask(n, m.config.mask_ratio, seed + i as u64).unwrap();
        let mut g = Graph::new();
        let (pass, _, mats) = m.masked_forward(&mut g, &[h], std::slice::from_ref(&plan), None).unwrap();
        let hidden = g.value(pass.hidden);
        let p = &mats[0];
        let width = p.width();
        let visible = |pos: csifm::tokenizer::PatchPos| -> Vec<f64> {
            match p.positions.iter().position(|&q| q == pos).filter(|j| !plan.masked.contains(j)) {
                Some(j) => p.values.row(j).iter().map(|&v| v as f64).collect(),
                None => vec![0.0; width],
            }
        };
        for &j in &plan.masked {
            let pos = p.positions[j];
            rep.push(hidden.row(j).iter().map(|&v| v as f64).collect());
            let left = if pos.f > 0 { visible(csifm::tokenizer::PatchPos { f: pos.f - 1, ..pos }) } else { vec![0.0; width] };
            let right = visible(csifm::tokenizer::PatchPos { f: pos.f + 1, ..pos });
            raw.push(left.into_iter().chain(right).collect());
            target.push(p.values.row(j).iter().map(|&v| v as f64).collect());
        }
    }
    (rep, raw, target)
}

#[test]
fn pretraining_improves_linear_probing() {
    const STEPS: u64 = 2000;
    const LAMBDA: f64 = 1e-3;
    let data = corpus(0, 64);
    let (fit, held) = (corpus(20, 48), corpus(21, 16));
    let mut m = FoundationModel::<f32>::new(EncoderConfig::desk(), 0).unwrap();
    let probe = |m: &FoundationModel<f32>| {
        let (rep_fit, raw_fit, y_fit) = probe_rows(m, &fit, 100);
        let (rep_held, raw_held, y_held) = probe_rows(m, &held, 200);
        let rep = probe_nmse(&ridge(&rep_fit, &y_fit, LAMBDA), &rep_held, &y_held);
        let raw = probe_nmse(&ridge(&raw_fit, &y_fit, LAMBDA), &raw_held, &y_held);
        (rep, raw)
    };
    let (untrained, raw) = probe(&m);
    let mut opt = Adam::new(AdamConfig::with_lr(1e-3)).unwrap();
    for step in 0..STEPS {
        let start = (step as usize * 4) % data.len();
        m.pretrain_step(&data[start..start + 4], &mut opt, step).unwrap();
    }
    let (trained, raw_again) = probe(&m);
    assert_eq!(raw, raw_again);
    eprintln!("held-out masked-patch probe nmse: raw neighbours {raw:.4}, untrained rep {untrained:.4}, pretrained rep {trained:.4}");
    assert!(trained < raw, "pretrained {trained} vs raw {raw}");
    assert!(trained < untrained);
}
