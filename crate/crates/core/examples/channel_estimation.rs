//! Raw vs representation input for LS-denoising channel estimation.
//!
//! Pretrains the desk encoder, then trains the same ResCNN head on LS
//! estimates and on their representations at several SNRs.
//!
//! Usage: `cargo run --release --example channel_estimation [pretrain steps] [epochs]`

use std::time::Instant;

use csifm::chansim::{generate_corpus, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::pipeline::{split_sizes, train_head, Condition, InputMode, TaskData, TaskKind, TaskSpec, TrainOptions};

fn main() -> csifm::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let steps = args.next().unwrap_or(2000);
    let epochs = args.next().unwrap_or(20);

    let t = Instant::now();
    let corpus = generate_corpus(0, 512, &CorpusConfig { snr_db: Some((-5.0, 20.0)), ..CorpusConfig::default() })?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(steps) };
    let report = model.pretrain(&corpus, &opts, |_, _| Ok(()))?;
    let tail = &report.losses[report.losses.len().saturating_sub(100)..];
    println!(
        "pretrained {} steps in {:.0} s, final masked NMSE {:.4}",
        report.losses.len(),
        t.elapsed().as_secs_f64(),
        tail.iter().sum::<f64>() / tail.len() as f64
    );

    let train = TrainOptions { lr: Some(1e-3), batch_size: Some(32), epochs, ..Default::default() };
    let sizes = split_sizes(TaskKind::Estimation, 0.01)?;
    println!("{:>6} {:>12} {:>12}", "snr", "raw nmse", "rep nmse");
    for snr in [-5.0, 0.0, 5.0, 10.0] {
        let data = TaskData::generate(TaskKind::Estimation, Condition::snr(snr), sizes, 0)?;
        let mut row = Vec::new();
        for mode in [InputMode::Raw, InputMode::Representation] {
            let t = Instant::now();
            let spec = TaskSpec::default_for(TaskKind::Estimation, mode, None, &model.config)?;
            let (out, _) = train_head(&spec, Some(&model), &data, &train, 0)?;
            eprintln!("  {} {snr} dB: {:.1} s", mode.name(), t.elapsed().as_secs_f64());
            row.push(out.test_metric);
        }
        println!("{snr:>6} {:>12.5} {:>12.5}", row[0], row[1]);
    }
    Ok(())
}
