//! Train a head on frozen representations, then update encoder and head
//! together and compare validation NMSE.

use csifm::chansim::{generate_corpus, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::pipeline::{
    finetune, split_sizes, train_head, Condition, FinetuneOptions, InputMode, TaskData, TaskKind, TaskSpec, TrainOptions,
};

fn main() -> csifm::Result<()> {
    let corpus = generate_corpus(0, 128, &CorpusConfig { snr_db: Some((-5.0, 20.0)), ..CorpusConfig::default() })?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(300) };
    model.pretrain(&corpus, &opts, |_, _| Ok(()))?;
    let before = model.id.clone();

    let data = TaskData::generate(TaskKind::Estimation, Condition::snr(0.0), split_sizes(TaskKind::Estimation, 0.002)?, 0)?;
    let spec = TaskSpec::default_for(TaskKind::Estimation, InputMode::Representation, None, &model.config)?;
    let train = TrainOptions { lr: Some(1e-3), batch_size: Some(16), epochs: 10, ..Default::default() };
    let (trained, _) = train_head(&spec, Some(&model), &data, &train, 0)?;
    println!("frozen encoder: test nmse {:.4}", trained.test_metric);

    let mut head = trained.head;
    let ft = FinetuneOptions { epochs: 3, ..Default::default() };
    let out = finetune(&spec, &mut model, &mut head, &data, &train, &ft, 1)?;
    println!("validation {:.4} -> {:?}", out.baseline_val, out.val_history);
    println!("improved: {}, encoder id {} -> {}", out.improved, &before[..12], &model.id[..12]);
    print!("{}", out.report.to_csv());
    Ok(())
}
