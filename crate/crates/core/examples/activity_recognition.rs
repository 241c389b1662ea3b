//! Six-class activity recognition from Wi-Fi CSI amplitudes.
//!
//! The activity encoder is pretrained on the training amplitudes alone, then
//! a narrow 2D ResNet classifies either the centred, pooled amplitude image
//! or the 72-token representation.

use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::pipeline::{split_sizes, train_head, Condition, InputMode, TaskData, TaskKind, TaskSpec, TrainOptions};

fn main() -> csifm::Result<()> {
    let steps = std::env::args().nth(1).map_or(100, |s| s.parse().expect("integer step count"));
    let data = TaskData::generate(TaskKind::Har, Condition::default(), split_sizes(TaskKind::Har, 0.1)?, 0)?;
    let corpus = data.train.iter().map(|e| e.observation.as_channel()).collect::<csifm::Result<Vec<_>>>()?;

    let mut model = FoundationModel::<f32>::new(EncoderConfig::activity(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(steps) };
    let report = model.pretrain(&corpus, &opts, |_, _| Ok(()))?;
    println!("pretrained on {} recordings, last loss {:.4}", corpus.len(), report.losses.last().copied().unwrap_or(f64::NAN));

    let train = TrainOptions { epochs: 15, lr: Some(2e-3), batch_size: Some(8), ..Default::default() };
    for mode in [InputMode::Raw, InputMode::Representation] {
        let spec = TaskSpec::default_for(TaskKind::Har, mode, None, &model.config)?;
        let spec = TaskSpec { head: spec.head.with_width(8), ..spec };
        let (out, _) = train_head(&spec, Some(&model), &data, &train, 0)?;
        println!("{:<4} accuracy {:.3} (best epoch {})", mode.name(), out.test_metric, out.best_epoch);
    }
    Ok(())
}
