//! Recover a 250-point scatterer cloud from a noiseless channel.

use csifm::chansim::{generate_corpus, CorpusConfig, SceneBounds};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::pipeline::{split_sizes, train_head, Condition, InputMode, TaskData, TaskKind, TaskSpec, TrainOptions};

fn main() -> csifm::Result<()> {
    let corpus = generate_corpus(0, 64, &CorpusConfig::default())?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(200) };
    model.pretrain(&corpus, &opts, |_, _| Ok(()))?;

    let data = TaskData::generate(TaskKind::Reconstruction, Condition::default(), split_sizes(TaskKind::Reconstruction, 0.05)?, 0)?;
    let diag = SceneBounds::default().diagonal_sq();
    let train = TrainOptions { lr: Some(1e-3), batch_size: Some(8), epochs: 10, ..Default::default() };
    for mode in [InputMode::Raw, InputMode::Representation] {
        let spec = TaskSpec::default_for(TaskKind::Reconstruction, mode, None, &model.config)?;
        let (out, _) = train_head(&spec, Some(&model), &data, &train, 0)?;
        println!("{:<4} chamfer {:.1} m^2 ({:.3} of the squared scene diagonal)", mode.name(), out.test_metric, out.test_metric / diag);
    }
    Ok(())
}
