use serde::{Deserialize, Serialize};

use crate::chansim::{ACTIVITY_CLASSES, FUTURE_SLOTS, HISTORY_SLOTS};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadKind};
use crate::tokenizer::PatchSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Estimation,
    Prediction,
    Har,
    Reconstruction,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Estimation => "estimation",
            TaskKind::Prediction => "prediction",
            TaskKind::Har => "har",
            TaskKind::Reconstruction => "reconstruction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "estimation" => Ok(TaskKind::Estimation),
            "prediction" => Ok(TaskKind::Prediction),
            "har" => Ok(TaskKind::Har),
            "reconstruction" => Ok(TaskKind::Reconstruction),
            _ => Err(Error::InvalidConfig(format!("unknown task {s:?}"))),
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            TaskKind::Estimation | TaskKind::Prediction => LossKind::RegressionNmse,
            TaskKind::Har => LossKind::CrossEntropy,
            TaskKind::Reconstruction => LossKind::Chamfer,
        }
    }

    /// Default optimizer settings `(lr, batch size)`.
    pub fn default_optimizer(self) -> (f64, usize) {
        match self {
            TaskKind::Estimation | TaskKind::Prediction => (1e-4, 512),
            TaskKind::Har => (1e-3, 16),
            TaskKind::Reconstruction => (1e-3, 16),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputMode {
    #[serde(rename = "raw")]
    Raw,
    #[serde(rename = "rep")]
    Representation,
}

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::Raw => "raw",
            InputMode::Representation => "rep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(InputMode::Raw),
            "rep" | "representation" => Ok(InputMode::Representation),
            _ => Err(Error::InvalidConfig(format!("unknown input mode {s:?} (expected raw or rep)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    RegressionNmse,
    CrossEntropy,
    Chamfer,
}

/// Pooling applied to raw activity amplitudes before the 2D head.
pub const ACTIVITY_RAW_POOL: (usize, usize) = (2, 20);

/// A downstream task: what to predict, from which input, with which head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub input: InputMode,
    pub head: HeadConfig,
    pub loss: LossKind,
    pub finetune: bool,
    /// Patch grid of raw estimation inputs and targets.
    #[serde(default = "PatchSpec::communication")]
    pub patch: PatchSpec,
}

impl TaskSpec {
    pub fn new(task: TaskKind, input: InputMode, head: HeadConfig, finetune: bool) -> Result<Self> {
        let spec = TaskSpec { task, input, head, loss: task.loss(), finetune, patch: PatchSpec::communication() };
        spec.validate()?;
        Ok(spec)
    }

    /// Default head for `task` and `input`, sized from the encoder's
    /// patch grid. `head` picks the kind where a task has two.
    pub fn default_for(task: TaskKind, input: InputMode, head: Option<HeadKind>, encoder: &EncoderConfig) -> Result<Self> {
        let p = encoder.patch;
        let d = encoder.d_model();
        let raw = p.raw_width();
        let cols = |rep: bool| if rep { d } else { raw };
        let rep = input == InputMode::Representation;
        let cfg = match task {
            TaskKind::Estimation => {
                let n = p.token_count(estimation_shape())?;
                match head.unwrap_or(HeadKind::ResCnn1d) {
                    HeadKind::ResCnn1d => HeadConfig::rescnn1d(n, cols(rep), raw),
                    HeadKind::TransformerEnc => HeadConfig::transformer_enc(n, cols(rep), raw),
                    k => return Err(unsupported(task, k)),
                }
            }
            TaskKind::Prediction => {
                let (t, s, f) = prediction_history_shape();
                let slot = s * f * 2;
                let (input, steps, proj) = if rep {
                    let n = p.token_count((t, s, f))?;
                    ([n, d], t.div_ceil(p.time), 8)
                } else {
                    ([t, slot], t, 0)
                };
                match head.unwrap_or(HeadKind::Lstm) {
                    HeadKind::Lstm => HeadConfig::lstm(input, steps, proj, [FUTURE_SLOTS, slot]),
                    HeadKind::TransformerEncDec => HeadConfig::transformer_encdec(input, steps, proj, [FUTURE_SLOTS, slot]),
                    k => return Err(unsupported(task, k)),
                }
            }
            TaskKind::Har => match head.unwrap_or(HeadKind::ResCnn2d) {
                HeadKind::ResCnn2d if rep => {
                    let n = p.token_count(activity_shape())?;
                    HeadConfig::rescnn2d(n, d, 1, ACTIVITY_CLASSES)
                }
                HeadKind::ResCnn2d => {
                    let (h, w) = activity_raw_image();
                    HeadConfig::rescnn2d(h, w, crate::chansim::ACTIVITY_LINKS, ACTIVITY_CLASSES)
                }
                k => return Err(unsupported(task, k)),
            },
            TaskKind::Reconstruction => match head.unwrap_or(HeadKind::PointCloudDecoder) {
                HeadKind::PointCloudDecoder => {
                    let n = p.token_count(estimation_shape())?;
                    let b = crate::chansim::SceneBounds::default();
                    HeadConfig {
                        out_scale: b.half_extent().to_vec(),
                        out_offset: b.center().to_vec(),
                        ..HeadConfig::pointcloud(n, cols(rep), RECONSTRUCTION_POINTS)
                    }
                }
                k => return Err(unsupported(task, k)),
            },
        };
        let spec = TaskSpec { task, input, head: cfg, loss: task.loss(), finetune: task.loss() != LossKind::CrossEntropy, patch: p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        if self.loss != self.task.loss() {
            return Err(Error::InvalidConfig(format!("{} uses {:?} loss, not {:?}", self.task.name(), self.task.loss(), self.loss)));
        }
        if self.finetune && self.loss == LossKind::CrossEntropy {
            return Err(Error::InvalidConfig(format!(
                "fine-tuning applies to regression losses only; {} is a classification task",
                self.task.name()
            )));
        }
        let ok = matches!(
            (self.task, self.head.kind),
            (TaskKind::Estimation, HeadKind::ResCnn1d | HeadKind::TransformerEnc)
                | (TaskKind::Prediction, HeadKind::Lstm | HeadKind::TransformerEncDec)
                | (TaskKind::Har, HeadKind::ResCnn2d)
                | (TaskKind::Reconstruction, HeadKind::PointCloudDecoder)
        );
        if !ok {
            return Err(unsupported(self.task, self.head.kind));
        }
        if self.task == TaskKind::Estimation {
            let want = [self.patch.token_count(estimation_shape())?, self.patch.raw_width()];
            if self.head.output != want {
                return Err(Error::InvalidConfig(format!("estimation head output {:?} for patch grid {want:?}", self.head.output)));
            }
        }
        Ok(())
    }
}

fn unsupported(task: TaskKind, kind: HeadKind) -> Error {
    Error::InvalidConfig(format!("head {} does not serve task {}", kind.name(), task.name()))
}

pub const RECONSTRUCTION_POINTS: usize = 250;

/// `(T, S, F)` of estimation and reconstruction channels.
pub fn estimation_shape() -> (usize, usize, usize) {
    (4, 16, 32)
}

pub fn prediction_history_shape() -> (usize, usize, usize) {
    (HISTORY_SLOTS, 32, 32)
}

/// Activity amplitudes viewed as `(time, links, subcarriers)`.
pub fn activity_shape() -> (usize, usize, usize) {
    (crate::chansim::ACTIVITY_TIME, crate::chansim::ACTIVITY_LINKS, crate::chansim::ACTIVITY_SUBCARRIERS)
}

/// Pooled raw activity image `(subcarriers / 2, time / 20)`.
pub fn activity_raw_image() -> (usize, usize) {
    (
        crate::chansim::ACTIVITY_SUBCARRIERS / ACTIVITY_RAW_POOL.0,
        crate::chansim::ACTIVITY_TIME / ACTIVITY_RAW_POOL.1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finetune_rule() {
        let enc = EncoderConfig::activity();
        let har = TaskSpec::default_for(TaskKind::Har, InputMode::Representation, None, &enc).unwrap();
        assert!(!har.finetune);
        assert!(TaskSpec::new(TaskKind::Har, InputMode::Representation, har.head.clone(), true).is_err());
        let est = TaskSpec::default_for(TaskKind::Estimation, InputMode::Raw, None, &EncoderConfig::desk()).unwrap();
        assert!(est.finetune);
    }

    #[test]
    fn default_heads_validate() {
        let enc = EncoderConfig::desk();
        for task in [TaskKind::Estimation, TaskKind::Prediction, TaskKind::Reconstruction] {
            for mode in [InputMode::Raw, InputMode::Representation] {
                TaskSpec::default_for(task, mode, None, &enc).unwrap();
            }
        }
        let har = TaskSpec::default_for(TaskKind::Har, InputMode::Raw, None, &EncoderConfig::activity()).unwrap();
        assert_eq!(har.head.image, Some([57, 100]));
        assert!(TaskSpec::default_for(TaskKind::Har, InputMode::Raw, Some(HeadKind::Lstm), &enc).is_err());
    }
}
