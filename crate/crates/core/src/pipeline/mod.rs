//! Downstream tasks: data, input adapters, head training, fine-tuning,
//! metrics, timing and experiment sweeps.

mod data;
mod experiment;
pub mod metrics;
mod report;
mod task;
mod timing;
mod train;

pub use data::{
    activity_image, pooled_activity, raw_input, reference_split, split_sizes, Condition, Example, Observation, Target, TaskData,
    PILOT_LENGTH,
};
pub use experiment::{run_experiment, ExperimentManifest, Sweep};
pub use metrics::{accuracy, argmax, chamfer_distance, nmse, nmse_batch};
pub use report::{config_hash, meta_path, EvalReport, MetricRecord, CSV_HEADER};
pub use task::{
    activity_raw_image, activity_shape, estimation_shape, prediction_history_shape, InputMode, LossKind, TaskKind,
    TaskSpec, ACTIVITY_RAW_POOL, RECONSTRUCTION_POINTS,
};
pub use timing::{timing_probe, TimingStats};
pub use train::{
    adapt, evaluate, finetune, fit_head, metric_name, predict, prepare, score, task_loss, train_head, FinetuneOptions,
    FinetuneOutcome, PreparedData, Split, TrainOptions, TrainOutcome,
};
