//! File formats, run configuration and the command implementations behind
//! the `csifm` binary.

mod checkpoint;
mod commands;
mod config;
mod dataset;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use commands::{run, Cli, Command};
pub use config::{PathsSection, PretrainSection, RunConfig, SimulatorSection, TaskSection};
pub use dataset::{
    load_dataset, manifest_path, manifest_text, parse_manifest, save_dataset, DType, Dataset, DATASET_MAGIC,
    DATASET_VERSION,
};

/// Worker-thread cap read from `WGPT_THREADS`; unset or invalid means no cap.
pub fn thread_cap() -> Option<usize> {
    std::env::var("WGPT_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// The single-line machine-readable form of an error.
pub fn error_line(e: &crate::Error) -> String {
    format!("error kind={} message={:?}", e.kind(), e.to_string())
}
