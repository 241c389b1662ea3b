//! Transformer encoder with masked-patch pretraining.
//!
//! Attention is joint over all tokens of a sample and causal in the
//! temporal patch index.

mod config;
mod model;
mod pretrain;

pub use config::EncoderConfig;
pub use model::{EncoderPass, FoundationModel, UniversalRepresentation};
pub use pretrain::{PretrainOptions, PretrainReport};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansim::{corpus_sample, ChannelTensor, CorpusConfig};
    use crate::numerics::{Adam, AdamConfig, Graph, Tensor};
    use crate::tokenizer::{plan_mask, MaskPlan};

    fn channel(t: usize, s: usize, f: usize, seed: u64) -> ChannelTensor {
        let v = Tensor::from_fn([t, s, f, 2], |i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 500.0 - 1.0);
        ChannelTensor::from_values(v).unwrap()
    }

    #[test]
    fn desk_parameter_count_in_band() {
        let m = FoundationModel::<f32>::new(EncoderConfig::desk(), 0).unwrap();
        let n = m.parameter_count();
        assert!((500_000..1_000_000).contains(&n), "{n}");
    }

    #[test]
    fn activity_representation_is_72_by_64() {
        let m = FoundationModel::<f32>::new(EncoderConfig::activity(), 0).unwrap();
        let h = ChannelTensor::from_values(Tensor::full([2000, 3, 114, 2], 0.5)).unwrap();
        let r = m.represent(&h).unwrap();
        assert_eq!(r.values.shape(), &[72, 64]);
        assert!((r.size_ratio() - 4608.0 / 684000.0).abs() < 1e-12);
        assert_eq!(format!("{:.3}", r.size_ratio() * 100.0), "0.674");
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 1).unwrap();
        let seq = m.tokenize(&channel(6, 4, 4, 3)).unwrap();
        for a in m.attention_maps(&seq).unwrap() {
            let n = a.shape()[3];
            for row in a.data().chunks_exact(n) {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn past_tokens_ignore_future() {
        let m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 2).unwrap();
        let h = channel(6, 4, 4, 5);
        let seq = m.tokenize(&h).unwrap();
        let mut other = seq.clone();
        for (i, p) in seq.positions.iter().enumerate() {
            if p.t > 0 {
                other.tokens.row_mut(i).iter_mut().for_each(|x| *x += 3.0);
            }
        }
        let a = m.encode(&seq).unwrap();
        let b = m.encode(&other).unwrap();
        for (i, p) in seq.positions.iter().enumerate() {
            if p.t == 0 {
                for (x, y) in a.values.row(i).iter().zip(b.values.row(i)) {
                    assert!((x - y).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_hidden_and_zero_bias_reconstruct_zero() {
        let mut m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 0).unwrap();
        m.params.get_mut("recon.b").unwrap().data_mut().fill(0.0);
        let mut r = m.represent(&channel(2, 2, 2, 0)).unwrap();
        r.values.data_mut().fill(0.0);
        let y = m.reconstruct_masked(&r).unwrap();
        assert_eq!(y.shape(), &[1, 16]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ratio_zero_is_a_no_op() {
        let cfg = EncoderConfig { mask_ratio: 0.0, ..EncoderConfig::tiny() };
        let mut m = FoundationModel::<f32>::new(cfg, 0).unwrap();
        let before = m.params.clone();
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let loss = m.pretrain_step(&[channel(4, 4, 4, 1)], &mut opt, 9).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(m.params, before);
    }

    #[test]
    fn unmasked_targets_do_not_move_loss() {
        let m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 0).unwrap();
        let h = channel(4, 4, 4, 7);
        let plan = plan_mask(8, 0.5, 3).unwrap();
        let base = m.masked_loss(&[&h], &[&h], std::slice::from_ref(&plan)).unwrap();
        let p = crate::tokenizer::partition_patches(&h, &m.config.patch).unwrap();
        let mut rows = p.values.clone();
        for i in (0..8).filter(|i| !plan.masked.contains(i)) {
            rows.row_mut(i).iter_mut().for_each(|x| *x = -*x + 10.0);
        }
        let vals = crate::tokenizer::reassemble_patches(&rows, &p.positions, &m.config.patch, h.dims()).unwrap();
        let t = ChannelTensor::from_values(vals).unwrap();
        let moved = m.masked_loss(&[&h], &[&t], &[plan]).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn every_parameter_gets_gradient() {
        let m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 4).unwrap();
        let hs: Vec<ChannelTensor> = (0..2).map(|i| channel(4, 4, 4, i)).collect();
        let refs: Vec<&ChannelTensor> = hs.iter().collect();
        let plans = m.plan_batch(&refs, 1).unwrap();
        let mut g = Graph::new();
        let loss = m.masked_loss_graph(&mut g, &refs, &refs, &plans, None).unwrap().unwrap();
        let grads = g.backpropagate(loss, &Tensor::scalar(1.0), &m.params).unwrap();
        for (name, t) in grads.by_name.iter() {
            assert!(t.data().iter().any(|&x| x != 0.0), "{name} has zero gradient");
        }
    }

    #[test]
    fn pretraining_is_deterministic_and_finite() {
        let data: Vec<ChannelTensor> = (0..4).map(|i| corpus_sample(1, i, &CorpusConfig::default()).unwrap()).collect();
        let cfg = EncoderConfig { patch: crate::tokenizer::PatchSpec { d_model: 16, ..crate::tokenizer::PatchSpec::communication() }, ..EncoderConfig::tiny() };
        let opts = PretrainOptions { epochs: 2, batch_size: 2, ..Default::default() };
        let run = || {
            let mut m = FoundationModel::<f32>::new(cfg.clone(), 3).unwrap();
            let mut epochs = Vec::new();
            let r = m.pretrain(&data, &opts, |e, _| {
                epochs.push(e);
                Ok(())
            });
            (r.unwrap(), epochs)
        };
        let (a, ea) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(ea, vec![0, 1]);
        assert_eq!(a.losses.len(), 4);
        assert!(a.losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn empty_plan_list_means_zero_loss() {
        let m = FoundationModel::<f32>::new(EncoderConfig::tiny(), 0).unwrap();
        let h = channel(2, 2, 2, 0);
        assert_eq!(m.masked_loss(&[&h], &[&h], &[MaskPlan::empty(1)]).unwrap(), 0.0);
    }
}
