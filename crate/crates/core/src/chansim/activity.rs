use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const ACTIVITY_LINKS: usize = 3;
pub const ACTIVITY_SUBCARRIERS: usize = 114;
pub const ACTIVITY_TIME: usize = 2000;
pub const ACTIVITY_CLASSES: usize = 6;
pub const ACTIVITY_NAMES: [&str; ACTIVITY_CLASSES] =
    ["running", "walking", "falling", "boxing", "circling arms", "cleaning floor"];

const SAMPLE_RATE_HZ: f64 = 1000.0;

/// CSI amplitude record `[links x subcarriers x time]` with its activity label.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivitySample {
    pub amplitude: Tensor<f32>,
    pub label: usize,
}

impl ActivitySample {
    pub fn new(amplitude: Tensor<f32>, label: usize) -> Result<Self> {
        if amplitude.rank() != 3 {
            return Err(Error::shape("ActivitySample", format!("{:?}", amplitude.shape())));
        }
        if label >= ACTIVITY_CLASSES {
            return Err(Error::Contract(format!("label {label} out of range")));
        }
        if amplitude.data().iter().any(|&a| a.is_nan() || a < 0.0) {
            return Err(Error::Contract("amplitudes must be non-negative".into()));
        }
        Ok(ActivitySample { amplitude, label })
    }

    /// View as a real-valued channel tensor `[time, links, subcarriers]`.
    pub fn to_channel_tensor(&self) -> Result<ChannelTensor> {
        let s = self.amplitude.shape();
        let (links, subs, time) = (s[0], s[1], s[2]);
        let src = self.amplitude.data();
        let mut data = vec![0f32; time * links * subs * 2];
        for l in 0..links {
            for k in 0..subs {
                let row = &src[(l * subs + k) * time..(l * subs + k + 1) * time];
                for (t, &a) in row.iter().enumerate() {
                    data[((t * links + l) * subs + k) * 2] = a;
                }
            }
        }
        ChannelTensor::from_values(Tensor::new([time, links, subs, 2], data)?)
    }
}

/// Class-specific body-motion modulation at time `t` seconds.
fn motion(label: usize, t: f64, f0: f64, onset: f64) -> f64 {
    let w = 2.0 * PI * f0 * t;
    match label {
        0 => w.sin() + 0.5 * (2.0 * w).sin(),
        1 => w.sin(),
        2 => {
            let step = 1.0 / (1.0 + (-(t - onset) / 0.05).exp());
            let burst = (-((t - onset) / 0.08).powi(2)).exp() * (2.0 * PI * 6.0 * t).sin();
            -0.8 * step + burst
        }
        3 => (2.0 * PI * 0.7 * t).sin().powi(2) * w.sin(),
        4 => w.sin() + 0.3 * (3.0 * w).sin(),
        _ => w.sin() * (0.6 + 0.4 * (2.0 * PI * 0.45 * t).sin()),
    }
}

const MOTION_HZ: [f64; ACTIVITY_CLASSES] = [2.6, 1.4, 0.0, 3.4, 0.8, 1.9];
const DEPTH: [f64; ACTIVITY_CLASSES] = [0.35, 0.25, 0.3, 0.3, 0.4, 0.2];
const SPATIAL_CYCLES: [f64; ACTIVITY_CLASSES] = [1.0, 1.5, 2.0, 2.5, 3.0, 0.5];

/// Sample `index` of the synthetic activity corpus; its label is `index % 6`.
pub fn activity_sample(seed: u64, index: usize) -> ActivitySample {
    let label = index % ACTIVITY_CLASSES;
    let mut r = rng::stream(rng::mix(seed, index as u64), 0xac7);
    let f0 = MOTION_HZ[label] * r.random_range(0.9..1.1);
    let depth = DEPTH[label] * r.random_range(0.85..1.15);
    let onset = r.random_range(0.6..1.4);
    let phase: [f64; ACTIVITY_LINKS] = std::array::from_fn(|_| r.random_range(0.0..2.0 * PI));
    let m: Vec<f64> = (0..ACTIVITY_TIME).map(|t| motion(label, t as f64 / SAMPLE_RATE_HZ, f0, onset)).collect();
    let mut data = Vec::with_capacity(ACTIVITY_LINKS * ACTIVITY_SUBCARRIERS * ACTIVITY_TIME);
    for (l, &ph) in phase.iter().enumerate() {
        for k in 0..ACTIVITY_SUBCARRIERS {
            let x = k as f64 / ACTIVITY_SUBCARRIERS as f64;
            let base = 1.0 + 0.3 * (2.0 * PI * x * 2.0 + l as f64 + ph).cos();
            let sens = (2.0 * PI * x * SPATIAL_CYCLES[label] + ph).cos();
            for &mt in &m {
                let n: f64 = StandardNormal.sample(&mut r);
                let a = base * (1.0 + depth * sens * mt) + 0.05 * n;
                data.push(a.abs() as f32);
            }
        }
    }
    let amplitude = Tensor::new([ACTIVITY_LINKS, ACTIVITY_SUBCARRIERS, ACTIVITY_TIME], data).expect("static shape");
    ActivitySample { amplitude, label }
}

/// `6 * per_class` samples, labels cycling through the six classes.
pub fn generate_activity_dataset(seed: u64, per_class: usize) -> Result<Vec<ActivitySample>> {
    if per_class == 0 {
        return Err(Error::Contract("per_class must be at least 1".into()));
    }
    Ok((0..per_class * ACTIVITY_CLASSES).map(|i| activity_sample(seed, i)).collect())
}
