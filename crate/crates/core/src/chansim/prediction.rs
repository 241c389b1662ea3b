use rand::Rng;
use serde::{Deserialize, Serialize};

use super::channel::{synthesize_channel, ChannelConfig, ChannelTensor};
use super::noise::add_noise_at_snr;
use super::scene::{generate_scene, SceneBounds};
use crate::error::{Error, Result};
use crate::rng;

pub const HISTORY_SLOTS: usize = 16;
pub const FUTURE_SLOTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    pub channel: ChannelConfig,
    pub velocity_kmh: (f64, f64),
    /// SNR of the observed history; the future is the clean truth.
    pub snr_db: Option<f64>,
    pub scatterers: usize,
    pub bounds: SceneBounds,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            channel: ChannelConfig::prediction(),
            velocity_kmh: (40.0, 100.0),
            snr_db: None,
            scatterers: 12,
            bounds: SceneBounds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPair {
    pub history: ChannelTensor,
    pub future: ChannelTensor,
}

/// One continuous trajectory of `16 + 4` slots split at slot 16.
pub fn prediction_pair(seed: u64, index: usize, cfg: &PredictionConfig) -> Result<PredictionPair> {
    let (lo, hi) = cfg.velocity_kmh;
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("velocity range {lo}..{hi} km/h")));
    }
    let s = rng::mix(seed, index as u64);
    let mut r = rng::stream(s, 0x9ed);
    let v_kmh = if hi > lo { r.random_range(lo..=hi) } else { lo };
    let scene = generate_scene(s, cfg.scatterers, cfg.bounds)?;
    let mut ch = cfg.channel.clone();
    ch.slots = HISTORY_SLOTS + FUTURE_SLOTS;
    ch.velocity_mps = v_kmh / 3.6;
    let az: f64 = r.random_range(0.0..std::f64::consts::TAU);
    ch.motion_direction = [az.cos(), az.sin(), 0.0];
    let h = synthesize_channel(&scene, &ch, s)?;
    let mut history = h.slice_slots(0, HISTORY_SLOTS)?;
    let future = h.slice_slots(HISTORY_SLOTS, HISTORY_SLOTS + FUTURE_SLOTS)?;
    if let Some(snr) = cfg.snr_db {
        history = add_noise_at_snr(&history, snr, s)?;
    }
    Ok(PredictionPair { history, future })
}

pub fn generate_prediction_sequences(seed: u64, count: usize, cfg: &PredictionConfig) -> Result<Vec<PredictionPair>> {
    (0..count).map(|i| prediction_pair(seed, i, cfg)).collect()
}
