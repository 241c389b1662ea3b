use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, PretrainOptions};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::pipeline::{config_hash, ExperimentManifest, FinetuneOptions, InputMode, TaskKind, TrainOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatorSection {
    /// Channels generated for a pretraining corpus.
    pub corpus_size: usize,
    /// SNR range, dB, at which corpus channels are observed. Absent means noiseless.
    pub corpus_snr_db: Option<(f64, f64)>,
    /// Fraction of the reference split sizes generated for task data.
    pub data_scale: f64,
    pub snr_db: Option<f64>,
    pub velocity_kmh: Option<f64>,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        SimulatorSection { corpus_size: 512, corpus_snr_db: Some((-5.0, 20.0)), data_scale: 0.01, snr_db: Some(10.0), velocity_kmh: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_steps: Option<usize>,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection { epochs: 16, batch_size: 4, lr: 1e-3, max_steps: Some(2000) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub input: InputMode,
    pub head: Option<HeadKind>,
    /// Override of the head's channel / hidden / model width.
    pub head_width: Option<usize>,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection { kind: TaskKind::Estimation, input: InputMode::Raw, head: None, head_width: None }
    }
}

/// Default file locations; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Everything a command needs besides its file arguments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub simulator: SimulatorSection,
    /// Unset picks the desk encoder, or the activity encoder for `har`.
    pub encoder: Option<EncoderConfig>,
    pub pretrain: PretrainSection,
    pub task: TaskSection,
    pub train: TrainOptions,
    pub finetune: FinetuneOptions,
    pub experiment: Option<ExperimentManifest>,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.encoder {
            e.validate()?;
        }
        if self.pretrain.batch_size == 0 || self.pretrain.lr.is_nan() || self.pretrain.lr <= 0.0 {
            return Err(Error::InvalidConfig("pretrain.batch_size and pretrain.lr must be positive".into()));
        }
        if self.simulator.corpus_size == 0 {
            return Err(Error::InvalidConfig("simulator.corpus_size must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.simulator.corpus_snr_db {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig("simulator.corpus_snr_db must be a finite [lo, hi] range".into()));
            }
        }
        crate::pipeline::split_sizes(self.task.kind, self.simulator.data_scale)?;
        if let Some(m) = &self.experiment {
            m.validate()?;
        }
        Ok(())
    }

    pub fn encoder_for(&self, task: TaskKind) -> EncoderConfig {
        match (&self.encoder, task) {
            (Some(e), _) => e.clone(),
            (None, TaskKind::Har) => EncoderConfig::activity(),
            (None, _) => EncoderConfig::desk(),
        }
    }

    pub fn pretrain_options(&self) -> PretrainOptions {
        let p = &self.pretrain;
        PretrainOptions { epochs: p.epochs, batch_size: p.batch_size, lr: p.lr, seed: self.seed, max_steps: p.max_steps }
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_name_the_key() {
        let e = RunConfig::parse("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert_eq!(e.kind(), "invalid_config");
        assert!(e.to_string().contains("learning_rate"), "{e}");
        assert!(RunConfig::parse("colour = 1\n").is_err());
    }

    #[test]
    fn partial_sections_take_defaults() {
        let c = RunConfig::parse("seed = 7\n[task]\nkind = \"har\"\ninput = \"rep\"\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.task.input, InputMode::Representation);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.encoder_for(c.task.kind), EncoderConfig::activity());
        assert_eq!(c.simulator, SimulatorSection::default());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash().unwrap(), RunConfig::parse("").unwrap().hash().unwrap());
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
