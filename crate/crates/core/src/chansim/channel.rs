use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::geometry::{dot, unit, ArrayGeometry, Vec3, SPEED_OF_LIGHT};
use super::scene::ScattererScene;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Physical configuration of a synthesized channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub slots: usize,
    pub subcarriers: usize,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub slot_s: f64,
    pub velocity_mps: f64,
    /// Direction of receiver motion (normalised internally).
    pub motion_direction: Vec3,
    pub rx_array: ArrayGeometry,
    pub tx_array: ArrayGeometry,
}

impl ChannelConfig {
    /// 4x4 MIMO, 32 subcarriers at 2.4 GHz.
    pub fn estimation() -> Self {
        ChannelConfig {
            slots: 4,
            subcarriers: 32,
            carrier_hz: 2.4e9,
            subcarrier_spacing_hz: 30e3,
            slot_s: 0.5e-3,
            velocity_mps: 10.0 / 3.6,
            motion_direction: [0.0, 1.0, 0.0],
            rx_array: ArrayGeometry::linear(4),
            tx_array: ArrayGeometry::linear(4),
        }
    }

    /// MISO from a dual-polarised 4x4 planar array to one moving antenna.
    pub fn prediction() -> Self {
        ChannelConfig {
            slots: 20,
            rx_array: ArrayGeometry::single(),
            tx_array: ArrayGeometry::planar(4, 4).with_dual_polarization(),
            velocity_mps: 40.0 / 3.6,
            ..Self::estimation()
        }
    }

    /// One transmit antenna, 4x4 half-wavelength planar receive array at 10 GHz.
    pub fn reconstruction() -> Self {
        ChannelConfig {
            slots: 4,
            carrier_hz: 10e9,
            velocity_mps: 0.0,
            rx_array: ArrayGeometry::planar(4, 4),
            tx_array: ArrayGeometry::single(),
            ..Self::estimation()
        }
    }

    pub fn spatial(&self) -> usize {
        self.rx_array.elements() * self.tx_array.elements()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.slots == 0 || self.subcarriers == 0 {
            return bad("slots and subcarriers must be at least 1");
        }
        if !(self.carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0 && self.slot_s > 0.0) {
            return bad("carrier frequency, subcarrier spacing and slot duration must be positive");
        }
        if !self.velocity_mps.is_finite() || self.velocity_mps < 0.0 {
            return bad("velocity must be finite and non-negative");
        }
        if !self.rx_array.is_valid() || !self.tx_array.is_valid() {
            return bad("invalid array geometry");
        }
        Ok(())
    }

    /// Maximum Doppler shift `v f_c / c` in Hz.
    pub fn max_doppler_hz(&self) -> f64 {
        self.velocity_mps * self.carrier_hz / SPEED_OF_LIGHT
    }
}

/// Metadata carried with every channel tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMeta {
    pub config: ChannelConfig,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Complex channel `H[time, space, frequency]` stored as a `[T, S, F, 2]`
/// real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTensor {
    values: Tensor<f32>,
    pub meta: ChannelMeta,
}

impl ChannelTensor {
    pub fn new(values: Tensor<f32>, meta: ChannelMeta) -> Result<Self> {
        let s = values.shape();
        if s.len() != 4 || s[3] != 2 || s[..3].contains(&0) {
            return Err(Error::shape("ChannelTensor", format!("expected [T, S, F, 2], got {s:?}")));
        }
        Ok(ChannelTensor { values, meta })
    }

    /// Wrap raw values with metadata shaped to match (used by loaders and
    /// for non-radio tensors such as activity amplitudes).
    pub fn from_values(values: Tensor<f32>) -> Result<Self> {
        let s = values.shape().to_vec();
        if s.len() != 4 {
            return Err(Error::shape("ChannelTensor", format!("expected [T, S, F, 2], got {s:?}")));
        }
        let config = ChannelConfig {
            slots: s[0],
            subcarriers: s[2],
            rx_array: ArrayGeometry::linear(s[1].max(1)),
            tx_array: ArrayGeometry::single(),
            ..ChannelConfig::estimation()
        };
        Self::new(values, ChannelMeta { config, snr_db: None, seed: 0 })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor<f32> {
        &mut self.values
    }

    pub fn into_values(self) -> Tensor<f32> {
        self.values
    }

    pub fn at(&self, t: usize, s: usize, f: usize) -> Complex64 {
        let (_, ns, nf) = self.dims();
        let i = ((t * ns + s) * nf + f) * 2;
        let d = self.values.data();
        Complex64::new(d[i] as f64, d[i + 1] as f64)
    }

    pub fn mean_power(&self) -> f64 {
        crate::numerics::complex::mean_power(&self.values).unwrap_or(0.0)
    }

    /// Slots `[start, end)` as a new tensor with the same metadata.
    pub fn slice_slots(&self, start: usize, end: usize) -> Result<ChannelTensor> {
        let (t, s, f) = self.dims();
        if start >= end || end > t {
            return Err(Error::Contract(format!("slot range {start}..{end} of {t}")));
        }
        let row = s * f * 2;
        let data = self.values.data()[start * row..end * row].to_vec();
        let mut meta = self.meta.clone();
        meta.config.slots = end - start;
        ChannelTensor::new(Tensor::new([end - start, s, f, 2], data)?, meta)
    }

    /// Scale to unit mean power; returns the applied factor.
    pub fn normalize_power(&mut self) -> f64 {
        let p = self.mean_power();
        if p <= 0.0 {
            return 1.0;
        }
        let k = 1.0 / p.sqrt();
        self.values.data_mut().iter_mut().for_each(|x| *x = (*x as f64 * k) as f32);
        k
    }
}

/// Geometric multipath channel:
///
/// `H[t,s,f] = sum_p g_p exp(j2π ν_p t Δt) exp(-j2π f Δf τ_p) a_rx[r] a_tx[x]`
/// with `s = r * N_tx + x`, `τ_p` the path length over c and `ν_p` the
/// Doppler shift from receiver motion projected on the arrival direction.
pub fn synthesize_channel(scene: &ScattererScene, cfg: &ChannelConfig, seed: u64) -> Result<ChannelTensor> {
    cfg.validate()?;
    scene.validate()?;
    let (nt, nf) = (cfg.slots, cfg.subcarriers);
    let (nrx, ntx) = (cfg.rx_array.elements(), cfg.tx_array.elements());
    let ns = nrx * ntx;
    let motion: Vec3 = unit(cfg.motion_direction);
    let fd = cfg.max_doppler_hz();

    let mut acc = vec![Complex64::new(0.0, 0.0); nt * ns * nf];
    let mut spatial = vec![Complex64::new(0.0, 0.0); ns];
    let mut freq = vec![Complex64::new(0.0, 0.0); nf];
    for path in &scene.paths {
        let tau = path.length_m / SPEED_OF_LIGHT;
        let nu = fd * dot(motion, path.arrival);
        let a_rx = cfg.rx_array.steering_vector(path.arrival);
        let a_tx = cfg.tx_array.steering_vector(path.departure);
        for (r, &ar) in a_rx.iter().enumerate() {
            for (x, &at) in a_tx.iter().enumerate() {
                spatial[r * ntx + x] = ar * at;
            }
        }
        for (f, z) in freq.iter_mut().enumerate() {
            *z = Complex64::from_polar(1.0, -2.0 * PI * f as f64 * cfg.subcarrier_spacing_hz * tau);
        }
        for t in 0..nt {
            let g = path.gain * Complex64::from_polar(1.0, 2.0 * PI * nu * t as f64 * cfg.slot_s);
            for (s, &sp) in spatial.iter().enumerate() {
                let gs = g * sp;
                let base = (t * ns + s) * nf;
                for (f, &fz) in freq.iter().enumerate() {
                    acc[base + f] += gs * fz;
                }
            }
        }
    }
    let mut data = Vec::with_capacity(acc.len() * 2);
    for z in acc {
        data.push(z.re as f32);
        data.push(z.im as f32);
    }
    let values = Tensor::new([nt, ns, nf, 2], data)?;
    ChannelTensor::new(values, ChannelMeta { config: cfg.clone(), snr_db: None, seed })
}
