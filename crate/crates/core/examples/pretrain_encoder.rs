//! Pretrain the desk-scale encoder on simulated channels and print the loss curve.
//!
//! Usage: `cargo run --release --example pretrain_encoder [steps] [corpus]`

use std::time::Instant;

use csifm::chansim::{generate_corpus, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};

fn main() -> csifm::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let steps = args.next().unwrap_or(200);
    let corpus = args.next().unwrap_or(64);

    let data = generate_corpus(0, corpus, &CorpusConfig::default())?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    println!("encoder parameters: {}", model.parameter_count());

    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(steps) };
    let start = Instant::now();
    let report = model.pretrain(&data, &opts, |_, _| Ok(()))?;
    let secs = start.elapsed().as_secs_f64();
    for (i, chunk) in report.losses.chunks(steps.div_ceil(10).max(1)).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("steps {:>5}..: masked NMSE {mean:.4}", i * chunk.len());
    }
    println!("{} steps in {secs:.1} s ({:.1} ms/step), checkpoint id {}", report.losses.len(), 1e3 * secs / report.losses.len() as f64, model.id);
    Ok(())
}
