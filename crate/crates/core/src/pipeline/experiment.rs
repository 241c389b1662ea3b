use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{split_sizes, Condition, TaskData};
use super::report::{config_hash, EvalReport};
use super::task::{InputMode, TaskKind, TaskSpec};
use super::train::{train_head, TrainOptions};
use crate::encoder::{EncoderConfig, FoundationModel};
use crate::error::{Error, Result};
use crate::heads::HeadKind;

/// One task swept over a grid of conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub task: TaskKind,
    pub inputs: Vec<InputMode>,
    #[serde(default)]
    pub head: Option<HeadKind>,
    /// Empty means noiseless.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Empty means the task's default speed.
    #[serde(default)]
    pub velocity_kmh: Vec<f64>,
}

impl Sweep {
    pub fn conditions(&self) -> Vec<Condition> {
        let snrs: Vec<Option<f64>> = if self.snr_db.is_empty() { vec![None] } else { self.snr_db.iter().map(|&s| Some(s)).collect() };
        let vels: Vec<Option<f64>> =
            if self.velocity_kmh.is_empty() { vec![None] } else { self.velocity_kmh.iter().map(|&v| Some(v)).collect() };
        snrs.iter().flat_map(|&snr_db| vels.iter().map(move |&velocity_kmh| Condition { snr_db, velocity_kmh })).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub sweeps: Vec<Sweep>,
    pub seeds: Vec<u64>,
    /// Fraction of the reference split sizes to generate.
    pub data_scale: f64,
    #[serde(default)]
    pub train: TrainOptions,
}

impl ExperimentManifest {
    /// Estimation over SNR -5..10 dB and prediction at 40 and 90 km/h.
    pub fn reference() -> Self {
        ExperimentManifest {
            sweeps: vec![
                Sweep {
                    task: TaskKind::Estimation,
                    inputs: vec![InputMode::Raw, InputMode::Representation],
                    head: Some(HeadKind::ResCnn1d),
                    snr_db: vec![-5.0, 0.0, 5.0, 10.0],
                    velocity_kmh: vec![],
                },
                Sweep {
                    task: TaskKind::Prediction,
                    inputs: vec![InputMode::Raw, InputMode::Representation],
                    head: Some(HeadKind::Lstm),
                    snr_db: vec![],
                    velocity_kmh: vec![40.0, 90.0],
                },
            ],
            seeds: vec![0, 1, 2],
            data_scale: 0.01,
            train: TrainOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.sweeps.is_empty() {
            return Err(Error::InvalidConfig("manifest needs at least one sweep and one seed".into()));
        }
        if self.sweeps.iter().any(|s| s.inputs.is_empty()) {
            return Err(Error::InvalidConfig("sweep.inputs is empty".into()));
        }
        for s in &self.sweeps {
            split_sizes(s.task, self.data_scale)?;
        }
        Ok(())
    }
}

/// Train and evaluate every `(sweep, condition, seed, input mode)` cell.
///
/// Each `(condition, seed)` pair generates its own data, shared by the
/// input modes so raw and representation heads see the same examples.
/// Cells run in parallel; records come back in canonical order.
pub fn run_experiment(manifest: &ExperimentManifest, encoder: Option<&FoundationModel<f32>>) -> Result<EvalReport> {
    manifest.validate()?;
    let mut cells = Vec::new();
    for sweep in &manifest.sweeps {
        for c in sweep.conditions() {
            for &seed in &manifest.seeds {
                cells.push((sweep, c, seed));
            }
        }
    }
    let reports: Vec<EvalReport> = cells
        .par_iter()
        .map(|&(sweep, c, seed)| {
            let data = TaskData::generate(sweep.task, c, split_sizes(sweep.task, manifest.data_scale)?, seed)?;
            let mut out = EvalReport::default();
            for &mode in &sweep.inputs {
                let cfg = match (mode, encoder) {
                    (_, Some(m)) => m.config.clone(),
                    (InputMode::Raw, None) => EncoderConfig::desk(),
                    (InputMode::Representation, None) => {
                        return Err(Error::Contract("representation mode needs a foundation checkpoint".into()))
                    }
                };
                let spec = TaskSpec::default_for(sweep.task, mode, sweep.head, &cfg)?;
                out.merge(train_head(&spec, encoder, &data, &manifest.train, seed)?.1);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut report = EvalReport::default();
    for r in reports {
        report.merge(r);
    }
    report.sort();
    #[derive(Serialize)]
    struct Identity<'a> {
        manifest: &'a ExperimentManifest,
        checkpoint: Option<&'a str>,
    }
    report.config_hash = config_hash(&Identity { manifest, checkpoint: encoder.map(|m| m.id.as_str()) })?;
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grids() {
        let m = ExperimentManifest::reference();
        let est: Vec<_> = m.sweeps[0].conditions().iter().map(|c| c.snr_db.unwrap()).collect();
        assert_eq!(est, vec![-5.0, 0.0, 5.0, 10.0]);
        let pred: Vec<_> = m.sweeps[1].conditions().iter().map(|c| c.velocity_kmh.unwrap()).collect();
        assert_eq!(pred, vec![40.0, 90.0]);
    }

    #[test]
    fn unknown_task_rejected() {
        let text = "seeds = [0]\ndata_scale = 0.01\n[[sweeps]]\ntask = \"beamforming\"\ninputs = [\"raw\"]\n";
        assert!(toml::from_str::<ExperimentManifest>(text).is_err());
    }

    #[test]
    fn each_cell_once_and_reproducible() {
        let m = ExperimentManifest {
            sweeps: vec![Sweep {
                task: TaskKind::Estimation,
                inputs: vec![InputMode::Raw],
                head: None,
                snr_db: vec![0.0, 10.0],
                velocity_kmh: vec![],
            }],
            seeds: vec![3, 4],
            data_scale: 0.0001,
            train: TrainOptions { epochs: 1, batch_size: Some(8), ..Default::default() },
        };
        let a = run_experiment(&m, None).unwrap();
        assert_eq!(a.records.len(), 4);
        let mut cells: Vec<_> = a.records.iter().map(|r| (r.snr_db.unwrap() as i64, r.seed)).collect();
        cells.dedup();
        assert_eq!(cells.len(), 4);
        assert_eq!(a.to_csv(), run_experiment(&m, None).unwrap().to_csv());
    }
}
