//! Raw vs representation over an SNR grid and several seeds, written as a
//! metrics CSV.
//!
//! Usage: `cargo run --example experiment_sweep [report.csv]`

use csifm::chansim::{generate_corpus, CorpusConfig};
use csifm::encoder::{EncoderConfig, FoundationModel, PretrainOptions};
use csifm::heads::HeadKind;
use csifm::pipeline::{run_experiment, ExperimentManifest, InputMode, Sweep, TaskKind, TrainOptions};

fn main() -> csifm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep.csv".into());
    let corpus = generate_corpus(0, 128, &CorpusConfig { snr_db: Some((-5.0, 20.0)), ..CorpusConfig::default() })?;
    let mut model = FoundationModel::<f32>::new(EncoderConfig::desk(), 0)?;
    let opts = PretrainOptions { epochs: usize::MAX, batch_size: 4, lr: 1e-3, seed: 0, max_steps: Some(300) };
    model.pretrain(&corpus, &opts, |_, _| Ok(()))?;

    let manifest = ExperimentManifest {
        sweeps: vec![Sweep {
            task: TaskKind::Estimation,
            inputs: vec![InputMode::Raw, InputMode::Representation],
            head: Some(HeadKind::ResCnn1d),
            snr_db: vec![-5.0, 5.0],
            velocity_kmh: vec![],
        }],
        seeds: vec![0, 1],
        data_scale: 0.005,
        train: TrainOptions { lr: Some(1e-3), batch_size: Some(32), epochs: 20, timing: true, ..Default::default() },
    };
    let report = run_experiment(&manifest, Some(&model))?;
    for mode in ["raw", "rep"] {
        let mean = report.mean("nmse", |r| r.input_mode.name() == mode).unwrap_or(f64::NAN);
        println!("{mode}: mean nmse {mean:.4}");
    }
    report.write(std::path::Path::new(&out))?;
    println!("{} rows -> {out}", report.records.len());
    Ok(())
}
