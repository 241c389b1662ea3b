//! Deterministic synthetic channels, pilots, activity records and scenes.

mod activity;
mod channel;
pub mod geometry;
mod noise;
mod pilots;
mod prediction;
mod scene;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use activity::{
    activity_sample, generate_activity_dataset, ActivitySample, ACTIVITY_CLASSES, ACTIVITY_LINKS,
    ACTIVITY_NAMES, ACTIVITY_SUBCARRIERS, ACTIVITY_TIME,
};
pub use channel::{synthesize_channel, ChannelConfig, ChannelMeta, ChannelTensor};
pub use geometry::{ArrayGeometry, ArrayKind, SPEED_OF_LIGHT};
pub use noise::{add_noise_at_snr, noise_power};
pub use pilots::{
    channel_matrix, ls_estimate, ls_estimate_tensor, ls_expected_nmse, qpsk_pilots, simulate_pilot_observation,
    CMatrix, PilotFrame,
};
pub use prediction::{
    generate_prediction_sequences, prediction_pair, PredictionConfig, PredictionPair, FUTURE_SLOTS, HISTORY_SLOTS,
};
pub use scene::{generate_scene, PropagationPath, ScattererScene, SceneBounds};

use crate::error::Result;
use crate::rng;

/// Recipe for a corpus of random-scene channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub channel: ChannelConfig,
    pub scatterers: usize,
    pub bounds: SceneBounds,
    /// Receiver speed drawn uniformly from this range, km/h.
    pub velocity_kmh: (f64, f64),
    /// When set, each channel is observed in white noise at an SNR drawn
    /// uniformly from this range, dB.
    #[serde(default)]
    pub snr_db: Option<(f64, f64)>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            channel: ChannelConfig::estimation(),
            scatterers: 12,
            bounds: SceneBounds::default(),
            velocity_kmh: (0.0, 30.0),
            snr_db: None,
        }
    }
}

/// Channel `index` of the corpus under `seed`.
pub fn corpus_sample(seed: u64, index: usize, cfg: &CorpusConfig) -> Result<ChannelTensor> {
    let s = rng::mix(seed, index as u64);
    let mut r = rng::stream(s, 0xc0);
    let (lo, hi) = cfg.velocity_kmh;
    let mut ch = cfg.channel.clone();
    ch.velocity_mps = if hi > lo { r.random_range(lo..hi) } else { lo } / 3.6;
    let az: f64 = r.random_range(0.0..std::f64::consts::TAU);
    ch.motion_direction = [az.cos(), az.sin(), 0.0];
    let scene = generate_scene(s, cfg.scatterers, cfg.bounds)?;
    let h = synthesize_channel(&scene, &ch, s)?;
    match cfg.snr_db {
        Some((lo, hi)) => add_noise_at_snr(&h, if hi > lo { r.random_range(lo..hi) } else { lo }, s ^ 0x5e),
        None => Ok(h),
    }
}

/// `count` corpus channels, generated in parallel with deterministic order.
pub fn generate_corpus(seed: u64, count: usize, cfg: &CorpusConfig) -> Result<Vec<ChannelTensor>> {
    (0..count).into_par_iter().map(|i| corpus_sample(seed, i, cfg)).collect()
}
