//! Four-slot channel prediction with the LSTM and encoder-decoder heads,
//! from raw history and from its representation, next to the
//! repeat-last-slot baseline.
//!
//! Usage: `cargo run --release --example channel_prediction [km/h] [epochs] [pretrain steps] [lstm|all]`

use csifm::chansim::{generate_corpus, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::heads::HeadKind;
use csifm::numerics::Tensor;
use csifm::pipeline::{
    nmse_batch, split_sizes, train_head, Condition, InputMode, Observation, Target, TaskData, TaskKind, TaskSpec, TrainOptions,
};

fn repeat_last(data: &TaskData) -> csifm::Result<f64> {
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for e in &data.test {
        let (Observation::Channel(h), Target::Matrix(t)) = (&e.observation, &e.target) else { unreachable!() };
        let (slots, s, f) = h.dims();
        let last = &h.values().data()[(slots - 1) * s * f * 2..];
        est.push(Tensor::new(t.shape().to_vec(), last.repeat(t.shape()[0]))?);
        truth.push(t.clone());
    }
    nmse_batch(&est, &truth)
}

fn main() -> csifm::Result<()> {
    let mut args = std::env::args().skip(1);
    let kmh: f64 = args.next().map_or(40.0, |a| a.parse().expect("speed in km/h"));
    let epochs: usize = args.next().map_or(10, |a| a.parse().expect("integer epochs"));
    let steps: usize = args.next().map_or(300, |a| a.parse().expect("integer steps"));
    let heads = match args.next().as_deref() {
        Some("all") => vec![HeadKind::Lstm, HeadKind::TransformerEncDec],
        _ => vec![HeadKind::Lstm],
    };

    let corpus = generate_corpus(0, 128, &CorpusConfig { snr_db: Some((-5.0, 20.0)), ..CorpusConfig::default() })?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(steps) };
    model.pretrain(&corpus, &opts, |_, _| Ok(()))?;

    let sizes = split_sizes(TaskKind::Prediction, 0.01)?;
    let data = TaskData::generate(TaskKind::Prediction, Condition { snr_db: None, velocity_kmh: Some(kmh) }, sizes, 0)?;
    println!("{kmh} km/h, splits {sizes:?}, repeat-last nmse {:.4}", repeat_last(&data)?);
    let train = TrainOptions { lr: Some(1e-3), batch_size: Some(16), epochs, ..Default::default() };
    for head in heads {
        for mode in [InputMode::Raw, InputMode::Representation] {
            let spec = TaskSpec::default_for(TaskKind::Prediction, mode, Some(head), &model.config)?;
            let (out, _) = train_head(&spec, Some(&model), &data, &train, 0)?;
            println!("  {:<18} {:<4} test nmse {:.4}", head.name(), mode.name(), out.test_metric);
        }
    }
    Ok(())
}
